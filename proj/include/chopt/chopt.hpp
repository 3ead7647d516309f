#pragma once

// Everything except the YAML configuration layer (chopt/config.hpp), which
// needs yaml-cpp.

#include "chopt/adjoint_solver.hpp"
#include "chopt/control.hpp"
#include "chopt/deim.hpp"
#include "chopt/fem.hpp"
#include "chopt/full_model.hpp"
#include "chopt/io.hpp"
#include "chopt/log.hpp"
#include "chopt/mesh.hpp"
#include "chopt/optimizer.hpp"
#include "chopt/pipeline.hpp"
#include "chopt/pod.hpp"
#include "chopt/rom.hpp"
#include "chopt/scenario.hpp"
#include "chopt/state_solver.hpp"
