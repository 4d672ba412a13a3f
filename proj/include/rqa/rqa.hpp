#pragma once

// Umbrella header for the resume quality assessment toolkit.

#include "rqa/common.hpp"
#include "rqa/corpus.hpp"
#include "rqa/embedding.hpp"
#include "rqa/features.hpp"
#include "rqa/linalg.hpp"
#include "rqa/losses.hpp"
#include "rqa/metrics.hpp"
#include "rqa/model.hpp"
#include "rqa/rng.hpp"
#include "rqa/sampling.hpp"
#include "rqa/trainer.hpp"
