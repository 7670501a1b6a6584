#pragma once

#include "aggregate.hpp"
#include "bitmap.hpp"
#include "dictionary.hpp"
#include "engine.hpp"
#include "error.hpp"
#include "gen.hpp"
#include "model.hpp"
#include "nquads.hpp"
#include "numeric.hpp"
#include "oracle.hpp"
#include "result.hpp"
#include "snapshot.hpp"
#include "sparql.hpp"
#include "store.hpp"
#include "term.hpp"
