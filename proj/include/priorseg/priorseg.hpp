#pragma once

#include "priorseg/errors.hpp"
#include "priorseg/evolution.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/image_io.hpp"
#include "priorseg/legendre.hpp"
#include "priorseg/noise.hpp"
#include "priorseg/phantom.hpp"
