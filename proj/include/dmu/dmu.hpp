#pragma once

// Umbrella header for the delayed-memory-update entity network library.

#include "dmu/archive.hpp"
#include "dmu/corpus.hpp"
#include "dmu/dense_array.hpp"
#include "dmu/embedding.hpp"
#include "dmu/error.hpp"
#include "dmu/metrics.hpp"
#include "dmu/model.hpp"
#include "dmu/ops.hpp"
#include "dmu/params.hpp"
#include "dmu/sampler.hpp"
#include "dmu/synth.hpp"
#include "dmu/tape.hpp"
#include "dmu/trainer.hpp"

namespace dmu {
inline constexpr const char* kVersion = "0.1.0";
}
