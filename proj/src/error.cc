// Copyright 2026 The clothpb Authors
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

#include "clothpb/error.h"

namespace clothpb {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kOverflow: return "overflow";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kDiverged: return "diverged";
    case ErrorKind::kNotConverged: return "not-converged";
    case ErrorKind::kUndefined: return "undefined";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kMissingArtifact: return "missing-artifact";
    case ErrorKind::kPlantFault: return "plant-fault";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + " error: " +
                         message),
      kind_(kind) {}

}  // namespace clothpb
