#pragma once

#include "emdreg/bemd.hpp"
#include "emdreg/bench.hpp"
#include "emdreg/bias_field.hpp"
#include "emdreg/errors.hpp"
#include "emdreg/ffd.hpp"
#include "emdreg/ffd_json.hpp"
#include "emdreg/image.hpp"
#include "emdreg/image_io.hpp"
#include "emdreg/metrics.hpp"
#include "emdreg/phantom.hpp"
#include "emdreg/registration.hpp"
#include "emdreg/similarity.hpp"
