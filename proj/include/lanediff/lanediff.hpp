#pragma once

#include "lanediff/diffusion.hpp"
#include "lanediff/errors.hpp"
#include "lanediff/graph.hpp"
#include "lanediff/graph_io.hpp"
#include "lanediff/grid.hpp"
#include "lanediff/matching.hpp"
#include "lanediff/metrics.hpp"
#include "lanediff/pipeline.hpp"
#include "lanediff/png_io.hpp"
#include "lanediff/raster.hpp"
#include "lanediff/rng.hpp"
#include "lanediff/skeleton.hpp"
#include "lanediff/synth.hpp"
#include "lanediff/toy_denoiser.hpp"
