#pragma once

#include "stifle_tpa/activations.hpp"
#include "stifle_tpa/compare.hpp"
#include "stifle_tpa/error.hpp"
#include "stifle_tpa/format.hpp"
#include "stifle_tpa/geometry.hpp"
#include "stifle_tpa/ingest.hpp"
#include "stifle_tpa/rng.hpp"
#include "stifle_tpa/synth.hpp"
