#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace velest {

// Failure modes surfaced to callers. Gate rejections are not errors
// (see mkf::UpdateStatus); these mark conditions the caller must handle.
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ScenarioUnreachableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CovarianceNotPdError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct WindowTooShortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LeadingGapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateChannelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientScenariosError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LengthMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroNormalizerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingCheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64; used to derive independent substream seeds so parallel
// units never share or race an engine.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace velest
