// Copyright 2026 The KGPFN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <vector>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/pfncore.hpp"

namespace kgpfn {

// Scores candidate tails of (head, relation, ?) against one context set.
template <typename T>
pfn::ScoredBatch<T> score_candidates(ctx::Encoder<T>& encoder, kg::EntityId head,
                                     kg::RelationId relation,
                                     const std::vector<kg::EntityId>& tails,
                                     const ctx::ContextSet& context);

// Refined context vectors [m, 3d'] for a context set.
template <typename T>
ad::Var<T> context_vectors(ctx::Encoder<T>& encoder, const ctx::ContextSet& context);

// Refined query vectors [n, 3d'] for candidate tails.
template <typename T>
ad::Var<T> query_vectors(ctx::Encoder<T>& encoder, kg::EntityId head, kg::RelationId relation,
                         const std::vector<kg::EntityId>& tails);

}  // namespace kgpfn
