#pragma once

#include "lazylab/activation.hpp"
#include "lazylab/gradflow.hpp"
#include "lazylab/gram.hpp"
#include "lazylab/kernel.hpp"
#include "lazylab/lab.hpp"
#include "lazylab/linalg.hpp"
#include "lazylab/network.hpp"
#include "lazylab/reporting.hpp"
#include "lazylab/rng.hpp"
