#pragma once

#include "bwb/surrogate/film.hpp"
#include "bwb/surrogate/ld.hpp"
#include "bwb/surrogate/oracle.hpp"
