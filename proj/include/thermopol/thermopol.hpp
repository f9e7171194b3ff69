#pragma once

#include "thermopol/errors.hpp"
#include "thermopol/raster.hpp"
#include "thermopol/polcore.hpp"
#include "thermopol/scene.hpp"
#include "thermopol/simulator.hpp"
#include "thermopol/autodiff.hpp"
#include "thermopol/sdf_network.hpp"
#include "thermopol/raymarch.hpp"
#include "thermopol/mesh.hpp"
#include "thermopol/marching_cubes.hpp"
#include "thermopol/evalkit.hpp"
#include "thermopol/reconstruct.hpp"
#include "thermopol/io.hpp"
#include "thermopol/config.hpp"
#include "thermopol/pipeline.hpp"
