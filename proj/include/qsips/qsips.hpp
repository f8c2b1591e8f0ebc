#pragma once

#include "qsips/analysis.hpp"
#include "qsips/combinatorics.hpp"
#include "qsips/config.hpp"
#include "qsips/errors.hpp"
#include "qsips/estimator.hpp"
#include "qsips/fft.hpp"
#include "qsips/field_map.hpp"
#include "qsips/frame_sim.hpp"
#include "qsips/io.hpp"
#include "qsips/moments.hpp"
#include "qsips/numeric.hpp"
#include "qsips/parallel.hpp"
#include "qsips/photon_models.hpp"
#include "qsips/reconstruction.hpp"
#include "qsips/rng.hpp"
#include "qsips/scene.hpp"
#include "qsips/sim_fusion.hpp"
#include "qsips/verify.hpp"
