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

#include "kgpfn/error.hpp"

namespace kgpfn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kContract: return "contract_violation";
    case ErrorKind::kParse: return "parse_error";
    case ErrorKind::kId: return "id_error";
    case ErrorKind::kVocabulary: return "vocabulary_error";
    case ErrorKind::kSpec: return "spec_error";
    case ErrorKind::kConfig: return "config_error";
    case ErrorKind::kEmptyRelation: return "empty_relation";
    case ErrorKind::kSamplingExhausted: return "sampling_exhausted";
    case ErrorKind::kVerification: return "verification_failure";
    case ErrorKind::kNumeric: return "numeric_error";
    case ErrorKind::kIo: return "io_error";
  }
  return "unknown";
}

}  // namespace kgpfn
