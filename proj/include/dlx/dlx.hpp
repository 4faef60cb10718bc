#pragma once

#include "dlx/analysis.hpp"
#include "dlx/corpus_vocab.hpp"
#include "dlx/evaluation.hpp"
#include "dlx/index_builder.hpp"
#include "dlx/kmeans.hpp"
#include "dlx/lemma.hpp"
#include "dlx/provider.hpp"
#include "dlx/provider_socket.hpp"
#include "dlx/sense_index.hpp"
#include "dlx/substitution.hpp"
#include "dlx/vector_core.hpp"
