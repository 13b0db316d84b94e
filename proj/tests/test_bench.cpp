#include <catch2/catch_amalgamated.hpp>
#include "emdreg/emdreg.hpp"
