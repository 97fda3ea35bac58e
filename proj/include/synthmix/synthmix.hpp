#pragma once

// Everything in one include.

#include "synthmix/ablate.hpp"
#include "synthmix/autograd.hpp"
#include "synthmix/baselines.hpp"
#include "synthmix/checkpoint.hpp"
#include "synthmix/config.hpp"
#include "synthmix/dataio.hpp"
#include "synthmix/error.hpp"
#include "synthmix/gan_core.hpp"
#include "synthmix/inspector.hpp"
#include "synthmix/layers.hpp"
#include "synthmix/losses.hpp"
#include "synthmix/maskgen.hpp"
#include "synthmix/metrics.hpp"
#include "synthmix/mixer.hpp"
#include "synthmix/optim.hpp"
#include "synthmix/plot.hpp"
#include "synthmix/rng.hpp"
#include "synthmix/tensor.hpp"
#include "synthmix/trainer.hpp"
