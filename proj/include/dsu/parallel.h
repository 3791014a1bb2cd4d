// Copyright 2026 The dsu-tone Authors
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
#ifndef DSU_PARALLEL_H_
#define DSU_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace dsu {

// Worker count from DSU_QUANT_THREADS, defaulting to the machine's
// hardware concurrency. Always >= 1.
int DefaultWorkerCount();

// Runs fn(chunk, begin, end) over [0, n) split into fixed-size chunks.
// The chunk layout depends only on n and chunk_size, never on the number of
// workers, so callers that reduce per-chunk results in chunk order get
// worker-count independent output.
void ParallelForChunks(
    std::size_t n, std::size_t chunk_size, int workers,
    const std::function<void(std::size_t chunk, std::size_t begin,
                             std::size_t end)>& fn);

inline std::size_t NumChunks(std::size_t n, std::size_t chunk_size) {
  return (n + chunk_size - 1) / chunk_size;
}

}  // namespace dsu

#endif  // DSU_PARALLEL_H_
