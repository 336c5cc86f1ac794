#pragma once

// Umbrella header for the CORDS set <-> field codec.

#include "cords/assignment.hpp"
#include "cords/bench.hpp"
#include "cords/decode.hpp"
#include "cords/decode1d.hpp"
#include "cords/encode.hpp"
#include "cords/error.hpp"
#include "cords/field_types.hpp"
#include "cords/gmm.hpp"
#include "cords/io.hpp"
#include "cords/kernels.hpp"
#include "cords/lbfgs.hpp"
#include "cords/optimize.hpp"
#include "cords/rng.hpp"
#include "cords/sampling.hpp"
#include "cords/version.hpp"
