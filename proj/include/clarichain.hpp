#pragma once

// Umbrella header.
#include "clarichain/aspect.hpp"
#include "clarichain/error.hpp"
#include "clarichain/eval.hpp"
#include "clarichain/gateway.hpp"
#include "clarichain/path_store.hpp"
#include "clarichain/prompt.hpp"
#include "clarichain/retrieval.hpp"
#include "clarichain/service.hpp"
#include "clarichain/session.hpp"
#include "clarichain/similarity.hpp"
#include "clarichain/text.hpp"
#include "clarichain/variant.hpp"
