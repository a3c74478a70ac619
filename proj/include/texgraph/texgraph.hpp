#pragma once

#include "texgraph/errors.hpp"
#include "texgraph/dense_matrix.hpp"
#include "texgraph/parallel.hpp"
#include "texgraph/vocabulary.hpp"
#include "texgraph/block_tensor.hpp"
#include "texgraph/mttkrp.hpp"
#include "texgraph/als.hpp"
#include "texgraph/lanczos.hpp"
#include "texgraph/spectral_init.hpp"
#include "texgraph/scoring.hpp"
#include "texgraph/io.hpp"
#include "texgraph/synth.hpp"
#include "texgraph/pipeline.hpp"
