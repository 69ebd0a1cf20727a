#pragma once

#include "fcs/array_file.hpp"
#include "fcs/augmentation.hpp"
#include "fcs/backends.hpp"
#include "fcs/bench.hpp"
#include "fcs/config.hpp"
#include "fcs/distribution.hpp"
#include "fcs/errors.hpp"
#include "fcs/image.hpp"
#include "fcs/losses.hpp"
#include "fcs/manifest.hpp"
#include "fcs/objective.hpp"
#include "fcs/optim.hpp"
#include "fcs/pipeline.hpp"
#include "fcs/pretrained.hpp"
#include "fcs/projection.hpp"
#include "fcs/prompts.hpp"
#include "fcs/resample.hpp"
#include "fcs/rng.hpp"
#include "fcs/textstyle_net.hpp"
