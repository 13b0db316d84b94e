#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "emdreg/bemd.hpp"
#include "emdreg/bias_field.hpp"
#include "emdreg/phantom.hpp"

using namespace emdreg;

namespace {

// Independent brute-force extremum detection used as the oracle.
struct NaiveExtrema {
    std::set<std::pair<int, int>> maxima, minima;
};

NaiveExtrema naive_extrema(const ImageGrid& g) {
    NaiveExtrema out;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            bool gt = true, lt = true;
            int checked = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    int nx = x + dx, ny = y + dy;
                    if (nx < 0 || nx >= g.width || ny < 0 || ny >= g.height) continue;
                    ++checked;
                    if (g.at(nx, ny) >= g.at(x, y)) gt = false;
                    if (g.at(nx, ny) <= g.at(x, y)) lt = false;
                }
            }
            if (checked == 0) continue;
            bool corner = (x == 0 || x == g.width - 1) && (y == 0 || y == g.height - 1);
            if (corner) continue;
            if (gt) out.maxima.insert({x, y});
            if (lt) out.minima.insert({x, y});
        }
    }
    return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    double cov = sab - sa * sb / n;
    double va = saa - sa * sa / n, vb = sbb - sb * sb / n;
    return cov / std::sqrt(va * vb);
}

ImageGrid smooth_noise(int w, int h, std::uint64_t seed) {
    ImageGrid img = make_random_image(w, h, seed);
    for (int i = 0; i < 3; ++i) img = detail::smooth3x3(img);
    return img;
}

double mean_abs_envelope_mean(const ImageGrid& g) {
    ExtremaSet ex = find_local_extrema(g);
    ImageGrid emax = interpolate_envelope(ex.maxima, g.width, g.height);
    ImageGrid emin = interpolate_envelope(ex.minima, g.width, g.height);
    double s = 0.0;
    for (size_t i = 0; i < g.size(); ++i) s += std::abs(0.5 * (emax.data[i] + emin.data[i]));
    return s / g.size();
}

} // namespace

TEST_CASE("find_local_extrema: single peak plus corner anchors") {
    ImageGrid g(3, 3, 0.0);
    g.at(1, 1) = 1.0;
    ExtremaSet ex = find_local_extrema(g);
    CHECK(ex.detected_maxima == 1);
    CHECK(ex.detected_minima == 0);
    REQUIRE(ex.maxima.size() == 5);  // peak + 4 anchors
    CHECK(ex.maxima[0].x == 1);
    CHECK(ex.maxima[0].y == 1);
    CHECK(ex.maxima[0].value == 1.0);
    REQUIRE(ex.minima.size() == 4);  // anchors only
    for (size_t i = ex.maxima.size() - 4; i < ex.maxima.size(); ++i) {
        const auto& c = ex.maxima[i];
        CHECK((c.x == 0 || c.x == 2));
        CHECK((c.y == 0 || c.y == 2));
    }
}

TEST_CASE("find_local_extrema: constant grid yields anchors only") {
    ImageGrid g(5, 4, 0.3);
    ExtremaSet ex = find_local_extrema(g);
    CHECK(ex.detected_maxima == 0);
    CHECK(ex.detected_minima == 0);
    CHECK(ex.maxima.size() == 4);
    CHECK(ex.minima.size() == 4);
}

TEST_CASE("find_local_extrema matches brute force on checkerboard and noise") {
    // Under strict 8-connected comparison a plain 0/1 checkerboard has no
    // extrema at all: every cell ties with its diagonal neighbors. The
    // brute-force enumeration and the implementation must agree on that.
    ImageGrid board(8, 7);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 8; ++x) board.at(x, y) = ((x + y) % 2 == 0) ? 1.0 : 0.0;
    NaiveExtrema nb = naive_extrema(board);
    CHECK(nb.maxima.empty());
    CHECK(nb.minima.empty());
    ExtremaSet bex = find_local_extrema(board);
    CHECK(bex.detected_maxima == 0);
    CHECK(bex.detected_minima == 0);

    // A checkerboard with strictly ordered diagonals does carry extrema:
    // bump each 1-cell by a tiny x-dependent ramp so diagonal ties break.
    ImageGrid ramp = board;
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 8; ++x)
            if ((x + y) % 2 == 0) ramp.at(x, y) += 0.01 * (x + 8 * y);
    NaiveExtrema nr = naive_extrema(ramp);
    ExtremaSet rex = find_local_extrema(ramp);
    std::set<std::pair<int, int>> ramp_max;
    for (int i = 0; i < rex.detected_maxima; ++i) ramp_max.insert({rex.maxima[i].x, rex.maxima[i].y});
    CHECK(ramp_max == nr.maxima);
    CHECK(!nr.maxima.empty());
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        ImageGrid g = make_random_image(17, 13, seed);
        ExtremaSet ex = find_local_extrema(g);
        NaiveExtrema naive = naive_extrema(g);
        std::set<std::pair<int, int>> got_max, got_min;
        for (int i = 0; i < ex.detected_maxima; ++i) got_max.insert({ex.maxima[i].x, ex.maxima[i].y});
        for (int i = 0; i < ex.detected_minima; ++i) got_min.insert({ex.minima[i].x, ex.minima[i].y});
        CHECK(got_max == naive.maxima);
        CHECK(got_min == naive.minima);
        for (const auto& p : got_max) CHECK(got_min.count(p) == 0);
    }
}

TEST_CASE("interpolate_envelope reproduces constants and planes") {
    std::vector<Extremum> pts = {{1, 1, 0.4}, {8, 2, 0.4}, {3, 7, 0.4}, {9, 9, 0.4}};
    ImageGrid c = interpolate_envelope(pts, 11, 11);
    for (double v : c.data) CHECK(v == Catch::Approx(0.4).margin(1e-9));

    std::vector<Extremum> plane;
    for (auto [x, y] : {std::pair{0, 0}, {10, 0}, {0, 10}, {10, 10}, {5, 3}, {2, 8}})
        plane.push_back({x, y, 2.0 * x + 3.0 * y + 1.0});
    ImageGrid p = interpolate_envelope(plane, 11, 11);
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x)
            CHECK(p.at(x, y) == Catch::Approx(2.0 * x + 3.0 * y + 1.0).margin(1e-8));
}

TEST_CASE("interpolate_envelope passes through scattered inputs") {
    auto rng = make_rng(17);
    std::uniform_int_distribution<int> ux(0, 30), uy(0, 24);
    std::uniform_real_distribution<double> uv(-1.0, 1.0);
    std::set<std::pair<int, int>> used;
    std::vector<Extremum> pts;
    while (pts.size() < 40) {
        int x = ux(rng), y = uy(rng);
        if (!used.insert({x, y}).second) continue;
        pts.push_back({x, y, uv(rng)});
    }
    ImageGrid s = interpolate_envelope(pts, 31, 25);
    for (const auto& p : pts) CHECK(s.at(p.x, p.y) == Catch::Approx(p.value).margin(1e-6));
}

TEST_CASE("interpolate_envelope averages duplicate coordinates") {
    std::vector<Extremum> pts = {{0, 0, 0.0}, {9, 0, 0.0}, {0, 9, 0.0}, {9, 9, 0.0},
                                 {4, 4, 1.0}, {4, 4, 3.0}};
    ImageGrid s = interpolate_envelope(pts, 10, 10);
    CHECK(s.at(4, 4) == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("envelope interpolation condition holds on both code paths") {
    // Small grid: thin-plate path.
    ImageGrid g = smooth_noise(40, 33, 5);
    ExtremaSet ex = find_local_extrema(g);
    ImageGrid emax = interpolate_envelope(ex.maxima, g.width, g.height);
    ImageGrid emin = interpolate_envelope(ex.minima, g.width, g.height);
    for (int i = 0; i < ex.detected_maxima; ++i)
        CHECK(emax.at(ex.maxima[i].x, ex.maxima[i].y) == Catch::Approx(ex.maxima[i].value).margin(1e-6));
    for (int i = 0; i < ex.detected_minima; ++i)
        CHECK(emin.at(ex.minima[i].x, ex.minima[i].y) == Catch::Approx(ex.minima[i].value).margin(1e-6));

    // Dense-extrema grid: Delaunay fallback path (> 2000 points).
    ImageGrid noisy = make_random_image(150, 150, 11);
    ExtremaSet exn = find_local_extrema(noisy);
    REQUIRE(exn.maxima.size() > 2000);
    ImageGrid env = interpolate_envelope(exn.maxima, noisy.width, noisy.height);
    int bad = 0;
    for (int i = 0; i < exn.detected_maxima; ++i)
        if (std::abs(env.at(exn.maxima[i].x, exn.maxima[i].y) - exn.maxima[i].value) > 1e-6) ++bad;
    CHECK(bad == 0);
}

TEST_CASE("sift of a constant image is the zero image") {
    ImageGrid g(12, 9, 0.8);
    ImageGrid imf = sift(g);
    for (double v : imf.data) CHECK(v == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("sift shrinks the mean envelope") {
    ImageGrid g = smooth_noise(36, 30, 21);
    double before = mean_abs_envelope_mean(g);
    ImageGrid imf = sift(g);
    double after = mean_abs_envelope_mean(imf);
    CHECK(after < before);
}

TEST_CASE("sift terminates within the iteration cap on a brain-like slice") {
    ImageGrid g = make_phantom(109, 90, 2);
    SiftStats stats;
    SiftOptions classic;  // the classic Huang-style stop
    classic.sd_threshold = 0.2;
    classic.max_sift_iters = 10;
    sift(g, classic, &stats);
    CHECK(stats.iterations >= 1);
    CHECK(stats.iterations <= 10);

    SiftStats deep_stats;
    sift(g, SiftOptions{}, &deep_stats);
    CHECK(deep_stats.iterations <= SiftOptions{}.max_sift_iters);
}

TEST_CASE("decompose reconstructs its input") {
    for (std::uint64_t seed : {4ull, 5ull}) {
        ImageGrid g = smooth_noise(48, 40, seed);
        ImfStack stack = decompose(g, 3);
        REQUIRE(stack.levels() == 3);
        double worst = 0.0;
        for (size_t i = 0; i < g.size(); ++i) {
            double sum = stack.residual.data[i];
            for (const auto& imf : stack.imfs) sum += imf.data[i];
            worst = std::max(worst, std::abs(sum - g.data[i]));
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("decompose of a constant image gives zero IMFs") {
    ImageGrid g(10, 8, 0.42);
    ImfStack stack = decompose(g, 3);
    REQUIRE(stack.levels() == 3);
    for (const auto& imf : stack.imfs)
        for (double v : imf.data) CHECK(v == 0.0);
    CHECK(stack.residual.data == g.data);
}

TEST_CASE("decompose is deterministic") {
    ImageGrid g = make_phantom(64, 53, 9);
    ImfStack a = decompose(g, 3);
    ImfStack b = decompose(g, 3);
    for (int i = 0; i < 3; ++i) REQUIRE(a.imfs[i].data == b.imfs[i].data);
    REQUIRE(a.residual.data == b.residual.data);
}

TEST_CASE("average_feature_map basics") {
    ImageGrid a(4, 3, 0.3), b(4, 3, 0.6), c(4, 3, 0.9);
    ImfStack one;
    one.imfs = {a};
    one.residual = ImageGrid(4, 3);
    CHECK(average_feature_map(one).data == a.data);

    ImfStack cancel;
    ImageGrid neg = a;
    for (double& v : neg.data) v = -v;
    cancel.imfs = {a, neg};
    cancel.residual = ImageGrid(4, 3);
    for (double v : average_feature_map(cancel).data) CHECK(v == 0.0);

    ImfStack three;
    three.imfs = {a, b, c};
    three.residual = ImageGrid(4, 3);
    for (double v : average_feature_map(three).data) CHECK(v == Catch::Approx(0.6));
}

TEST_CASE("a smooth bias bump routes to the residual") {
    // Single-seed check of the separation property; the acceptance suite
    // runs the multi-seed version. Full width matters: sigma = width/16 must
    // sit well above the texture scale for every decomposition level.
    ImageGrid base = make_phantom(218, 181, 1);
    BiasFieldConfig bf;
    bf.kernel_count = 1;
    bf.sigma = base.width / 16.0;
    bf.seed = 101;
    ImageGrid g = generate_bias_field(base.width, base.height, bf);
    ImageGrid corrupted = apply_bias(base, g);

    ImfStack clean = decompose(base, 3);
    ImfStack noisy = decompose(corrupted, 3);

    std::vector<double> res_diff(base.size());
    for (size_t i = 0; i < base.size(); ++i)
        res_diff[i] = noisy.residual.data[i] - clean.residual.data[i];
    CHECK(pearson(res_diff, g.data) > 0.8);
    for (int l = 0; l < 3; ++l) {
        std::vector<double> imf_diff(base.size());
        for (size_t i = 0; i < base.size(); ++i)
            imf_diff[i] = noisy.imfs[l].data[i] - clean.imfs[l].data[i];
        CHECK(std::abs(pearson(imf_diff, g.data)) < 0.3);
    }
}

TEST_CASE("IMF rows oscillate about zero with crossings tracking extrema") {
    // Rows of a 2D IMF are not 1D IMFs, so the strict 1D count balance
    // |#crossings - #extrema| <= 1 does not transfer (a row sliding along a
    // nodal line collects same-sign extremum pairs). What does hold, and what
    // registration relies on, is that each IMF is a signed oscillation:
    // near-zero mean, and zero crossings commensurate with 1D extrema on
    // nearly all rows. The source image itself fails both checks.
    ImageGrid g = make_phantom(109, 90, 4);
    ImfStack stack = decompose(g, 3);

    auto row_stats = [](const ImageGrid& img, int y) {
        int zc = 0, ext = 0, last = 0;
        for (int x = 0; x < img.width; ++x) {
            double v = img.at(x, y);
            int s = v > 0 ? 1 : (v < 0 ? -1 : 0);
            if (s != 0) {
                if (last != 0 && s != last) ++zc;
                last = s;
            }
            if (x >= 1 && x + 1 < img.width) {
                double a = img.at(x - 1, y), c = img.at(x + 1, y);
                if ((v > a && v > c) || (v < a && v < c)) ++ext;
            }
        }
        return std::pair<int, int>{zc, ext};
    };

    for (const auto& imf : stack.imfs) {
        double mean = 0.0, mean_abs = 0.0;
        for (double v : imf.data) {
            mean += v;
            mean_abs += std::abs(v);
        }
        mean /= static_cast<double>(imf.size());
        mean_abs /= static_cast<double>(imf.size());
        CHECK(std::abs(mean) < 0.5 * mean_abs);

        int ok = 0;
        for (int y = 0; y < imf.height; ++y) {
            auto [zc, ext] = row_stats(imf, y);
            if (zc >= static_cast<int>(0.2 * ext)) ++ok;
        }
        CHECK(ok >= (imf.height * 9) / 10);
    }

    // Contrast: the raw (all-positive) image has no crossings at all.
    int raw_zc = 0;
    for (int y = 0; y < g.height; ++y) raw_zc += row_stats(g, y).first;
    CHECK(raw_zc == 0);
}
