#pragma once

// Umbrella header.

#include "pcmsar/errors.hpp"
#include "pcmsar/fusion.hpp"
#include "pcmsar/glcm.hpp"
#include "pcmsar/image.hpp"
#include "pcmsar/image_io.hpp"
#include "pcmsar/losses.hpp"
#include "pcmsar/matrix.hpp"
#include "pcmsar/mlp.hpp"
#include "pcmsar/noise.hpp"
#include "pcmsar/pipeline.hpp"
#include "pcmsar/rng.hpp"
#include "pcmsar/sampling.hpp"
#include "pcmsar/trainer.hpp"
