// Copyright 2026 The Veil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VEIL_COMMON_VERSION_H_
#define VEIL_COMMON_VERSION_H_

namespace veil {

// Recorded in every artifact this library writes.
inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr int kToolVersionMajor = 0;

}  // namespace veil

#endif  // VEIL_COMMON_VERSION_H_
