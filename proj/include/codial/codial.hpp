#pragma once

#include "codial/util.hpp"
#include "codial/diagnostic.hpp"
#include "codial/chief.hpp"
#include "codial/program.hpp"
#include "codial/compiler.hpp"
#include "codial/colang.hpp"
#include "codial/backend.hpp"
#include "codial/runtime.hpp"
#include "codial/gcg.hpp"
#include "codial/metrics.hpp"
#include "codial/eval.hpp"
#include "codial/promptopt.hpp"
#include "codial/service.hpp"
