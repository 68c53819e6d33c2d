// babble/common.hpp
//
// Copyright 2026  The Babble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace babble {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or extent mismatch in a tensor operation.
struct DimensionError : Error {
  using Error::Error;
};

/// Input too short for the requested operation.
struct LengthError : Error {
  using Error::Error;
};

/// Malformed or unsupported file content; the message names the field.
struct FormatError : Error {
  using Error::Error;
};

/// Invalid argument value (probabilities, ranges, labels, energies).
struct ValueError : Error {
  using Error::Error;
};

/// Checkpoint or codebook container problems (truncation, bad version).
struct CheckpointError : Error {
  using Error::Error;
};

/// Raised by the training loop on a non-finite loss; carries enough
/// context to replay the offending batch.
struct TrainingAborted : Error {
  TrainingAborted(const std::string& msg, unsigned long long batch_seed,
                  long long step)
      : Error(msg), batch_seed(batch_seed), step(step) {}
  unsigned long long batch_seed;
  long long step;
};

}  // namespace babble
