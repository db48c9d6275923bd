#pragma once

// Customer2Vec: supervised embedding of tabular customers with clustering and
// similarity search on the embedded vectors. Single convenience include.

#include "custvec/clustering.hpp"
#include "custvec/common.hpp"
#include "custvec/dataset.hpp"
#include "custvec/embedding.hpp"
#include "custvec/evaluation.hpp"
#include "custvec/matrix.hpp"
#include "custvec/network.hpp"
#include "custvec/pipeline.hpp"
#include "custvec/rng.hpp"
