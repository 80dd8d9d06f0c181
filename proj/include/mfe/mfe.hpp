#pragma once

#include "mfe/calibrate.hpp"
#include "mfe/cohesive.hpp"
#include "mfe/cohesive_element.hpp"
#include "mfe/config_io.hpp"
#include "mfe/core.hpp"
#include "mfe/curve.hpp"
#include "mfe/hex_element.hpp"
#include "mfe/manifest.hpp"
#include "mfe/material.hpp"
#include "mfe/mesh.hpp"
#include "mfe/mesh_io.hpp"
#include "mfe/parallel.hpp"
#include "mfe/solver.hpp"
#include "mfe/svg.hpp"
