#pragma once

#include "ounet/autodiff.hpp"
#include "ounet/checkpoint.hpp"
#include "ounet/errors.hpp"
#include "ounet/geometry.hpp"
#include "ounet/index_table.hpp"
#include "ounet/layers.hpp"
#include "ounet/metrics.hpp"
#include "ounet/model.hpp"
#include "ounet/octree.hpp"
#include "ounet/params.hpp"
#include "ounet/patch.hpp"
#include "ounet/pointcloud_io.hpp"
#include "ounet/training.hpp"
#include "ounet/gradcheck.hpp"
