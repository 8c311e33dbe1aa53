#pragma once

#include "signtune/error.hpp"
#include "signtune/digest.hpp"
#include "signtune/parameter_set.hpp"
#include "signtune/archive.hpp"
#include "signtune/checkpoint.hpp"
#include "signtune/schedule.hpp"
#include "signtune/prompts.hpp"
#include "signtune/raster.hpp"
#include "signtune/data.hpp"
#include "signtune/model.hpp"
#include "signtune/losses.hpp"
#include "signtune/training.hpp"
#include "signtune/eval.hpp"
#include "signtune/experiment.hpp"
