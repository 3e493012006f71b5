#pragma once

#include "error.hpp"
#include "rng.hpp"
#include "geometry.hpp"
#include "convex_hull.hpp"
#include "raster.hpp"
#include "parts.hpp"
#include "stable_poses.hpp"
#include "synthetic_vision.hpp"
#include "confusion.hpp"
#include "transitions.hpp"
#include "designer.hpp"
