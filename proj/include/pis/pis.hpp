#pragma once

#include "pis/errors.hpp"
#include "pis/metrics.hpp"
#include "pis/pipeline.hpp"
#include "pis/qnetwork.hpp"
#include "pis/ratio_policy.hpp"
#include "pis/replay_buffer.hpp"
#include "pis/rng.hpp"
#include "pis/scoring.hpp"
#include "pis/segmentation.hpp"
#include "pis/sentence_sampler.hpp"
#include "pis/token_sampler.hpp"
