#pragma once

#include "comac/checkpoint.hpp"
#include "comac/config.hpp"
#include "comac/corpus.hpp"
#include "comac/embedding.hpp"
#include "comac/evaluation.hpp"
#include "comac/grounding.hpp"
#include "comac/latesim.hpp"
#include "comac/metrics.hpp"
#include "comac/model.hpp"
#include "comac/objective.hpp"
#include "comac/saliency.hpp"
#include "comac/synthetic.hpp"
