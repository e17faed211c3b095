#pragma once

#include "core.hpp"
#include "linalg.hpp"
#include "generator.hpp"
#include "weights.hpp"
#include "forward.hpp"
#include "sampler.hpp"
#include "analysis.hpp"
#include "evidence.hpp"
#include "io.hpp"
#include "demo.hpp"
