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

#ifndef CLOTHPB_ERROR_H_
#define CLOTHPB_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace clothpb {

enum class ErrorKind {
  kShape,          // incompatible tensor shapes
  kOverflow,       // an operation produced a non-finite value
  kContract,       // precondition violated by the caller
  kDiverged,       // integration or training blew up
  kNotConverged,   // iterative procedure exhausted its budget
  kUndefined,      // quantity undefined for the given data
  kIo,
  kConfig,
  kSchema,
  kMissingArtifact,
  kPlantFault,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace clothpb

#endif  // CLOTHPB_ERROR_H_
