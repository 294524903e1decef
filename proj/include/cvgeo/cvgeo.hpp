#pragma once

#include "cvgeo/binary_io.hpp"
#include "cvgeo/common.hpp"
#include "cvgeo/config.hpp"
#include "cvgeo/error.hpp"
#include "cvgeo/geometry.hpp"
#include "cvgeo/gradcheck.hpp"
#include "cvgeo/gridlab.hpp"
#include "cvgeo/image.hpp"
#include "cvgeo/losses.hpp"
#include "cvgeo/model.hpp"
#include "cvgeo/noise.hpp"
#include "cvgeo/ops.hpp"
#include "cvgeo/parallel.hpp"
#include "cvgeo/retrieval.hpp"
#include "cvgeo/tensor.hpp"
#include "cvgeo/worldgen.hpp"
