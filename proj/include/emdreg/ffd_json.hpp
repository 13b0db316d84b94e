#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "emdreg/errors.hpp"
#include "emdreg/ffd.hpp"

namespace emdreg {

inline nlohmann::json to_json(const FfdTransform& t) {
    return nlohmann::json{{"nx", t.nx},
                          {"ny", t.ny},
                          {"spacing_x", t.spacing_x},
                          {"spacing_y", t.spacing_y},
                          {"image_width", t.image_width},
                          {"image_height", t.image_height},
                          {"dx", t.dx},
                          {"dy", t.dy}};
}

inline FfdTransform ffd_from_json(const nlohmann::json& j) {
    FfdTransform t;
    t.nx = j.at("nx").get<int>();
    t.ny = j.at("ny").get<int>();
    t.spacing_x = j.at("spacing_x").get<double>();
    t.spacing_y = j.at("spacing_y").get<double>();
    t.image_width = j.at("image_width").get<int>();
    t.image_height = j.at("image_height").get<int>();
    t.dx = j.at("dx").get<std::vector<double>>();
    t.dy = j.at("dy").get<std::vector<double>>();
    if (t.nx < 4 || t.ny < 4 || t.dx.size() != t.control_count() || t.dy.size() != t.control_count())
        throw format_error("ffd_from_json: inconsistent transform fields");
    return t;
}

inline void save_transform(const FfdTransform& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    out << to_json(t).dump(2) << "\n";
}

inline FfdTransform load_transform(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("bad transform JSON in " + path + ": " + e.what());
    }
    return ffd_from_json(j);
}

} // namespace emdreg
