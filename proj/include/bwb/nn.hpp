#pragma once

#include "bwb/nn/model.hpp"
#include "bwb/nn/ops.hpp"
#include "bwb/nn/tape.hpp"
