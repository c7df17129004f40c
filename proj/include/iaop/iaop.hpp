#pragma once

#include "iaop/bench.hpp"
#include "iaop/core.hpp"
#include "iaop/exact_gac.hpp"
#include "iaop/gac.hpp"
#include "iaop/gtc.hpp"
#include "iaop/ials.hpp"
#include "iaop/influence.hpp"
#include "iaop/io.hpp"
#include "iaop/pomcp.hpp"
#include "iaop/rnn.hpp"
#include "iaop/source.hpp"
