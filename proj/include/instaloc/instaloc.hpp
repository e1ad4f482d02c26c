// Umbrella header for the whole library.

#pragma once

#include "instaloc/descriptor.hpp"
#include "instaloc/embedding.hpp"
#include "instaloc/engine.hpp"
#include "instaloc/experiment.hpp"
#include "instaloc/geometry.hpp"
#include "instaloc/instance.hpp"
#include "instaloc/kdtree.hpp"
#include "instaloc/lidar.hpp"
#include "instaloc/map_database.hpp"
#include "instaloc/matching.hpp"
#include "instaloc/ply_io.hpp"
#include "instaloc/random.hpp"
#include "instaloc/scene.hpp"
#include "instaloc/scene_generator.hpp"
#include "instaloc/segmentation.hpp"
#include "instaloc/semantics.hpp"
#include "instaloc/training.hpp"
#include "instaloc/triplets.hpp"
