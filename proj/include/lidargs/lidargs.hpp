// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/camera.hpp"
#include "lidargs/common.hpp"
#include "lidargs/complexity.hpp"
#include "lidargs/config.hpp"
#include "lidargs/depth_render.hpp"
#include "lidargs/image.hpp"
#include "lidargs/losses.hpp"
#include "lidargs/ply.hpp"
#include "lidargs/pointcloud.hpp"
#include "lidargs/splat_io.hpp"
#include "lidargs/splat_model.hpp"
#include "lidargs/sym_eigen3.hpp"
#include "lidargs/synth.hpp"
#include "lidargs/trainer.hpp"
