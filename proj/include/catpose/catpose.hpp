#pragma once

#include "catpose/error.hpp"
#include "catpose/eval.hpp"
#include "catpose/geometry.hpp"
#include "catpose/nocs.hpp"
#include "catpose/pnp.hpp"
#include "catpose/random.hpp"
#include "catpose/scale.hpp"
#include "catpose/synth.hpp"
