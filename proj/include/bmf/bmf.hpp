#pragma once

#include "bmf/config.hpp"
#include "bmf/distributions.hpp"
#include "bmf/error.hpp"
#include "bmf/experiments.hpp"
#include "bmf/factor_state.hpp"
#include "bmf/inference.hpp"
#include "bmf/linalg.hpp"
#include "bmf/log_joint.hpp"
#include "bmf/matrix_io.hpp"
#include "bmf/model_spec.hpp"
#include "bmf/nmf.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/poisson.hpp"
#include "bmf/rng.hpp"
#include "bmf/splits.hpp"
#include "bmf/sweep.hpp"
#include "bmf/synthetic.hpp"
#include "bmf/updates.hpp"
#include "bmf/volume.hpp"
