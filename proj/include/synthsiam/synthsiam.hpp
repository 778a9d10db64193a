#pragma once

// Umbrella header for the Synthetic-Siamese detection toolkit.

#include "synthsiam/baseline.hpp"
#include "synthsiam/corpus.hpp"
#include "synthsiam/encoder.hpp"
#include "synthsiam/encoder_io.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/eval.hpp"
#include "synthsiam/generation.hpp"
#include "synthsiam/optim.hpp"
#include "synthsiam/prompt_grid.hpp"
#include "synthsiam/prompts.hpp"
#include "synthsiam/siamese.hpp"
#include "synthsiam/text.hpp"
#include "synthsiam/transformer.hpp"
