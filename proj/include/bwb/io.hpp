#pragma once

#include "bwb/io/cases.hpp"
#include "bwb/io/checkpoint.hpp"
#include "bwb/io/manifest.hpp"
#include "bwb/io/results.hpp"
#include "bwb/io/text.hpp"
#include "bwb/io/vtk.hpp"
