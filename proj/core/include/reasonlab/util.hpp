#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace reasonlab::util {

// --- stable hashing / seeded randomness -----------------------------------
//
// Everything that needs reproducible pseudo-randomness in the pipeline flows
// through these two functions. Both are fixed algorithms (FNV-1a 64,
// splitmix64), so seed-derived behavior is identical across platforms and
// builds.

constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Uniform double in [0, 1) from a 64-bit word (53-bit mantissa).
constexpr double uniform01(std::uint64_t word) {
    return static_cast<double>(word >> 11) * 0x1.0p-53;
}

// Mixes an ordered list of string/integer parts into one 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::string_view> parts,
                          std::initializer_list<std::uint64_t> numbers = {});

// Deterministic Fisher-Yates permutation of [0, n). std::shuffle is
// implementation-defined, this is not.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// SHA-256 hex digest (cache keys, config digests).
std::string sha256_hex(std::string_view data);

// --- string helpers --------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::vector<std::string> split_lines(std::string_view text);

// Whitespace-delimited unit count; the token approximation for backends that
// do not report usage.
int approx_token_count(std::string_view text);

// --- filesystem ------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);

// Write-temp-then-rename so concurrent readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path,
                       std::string_view content);

// --- bounded parallel execution ---------------------------------------------

// Runs fn(i) for i in [0, count) on up to max_workers threads. Exceptions
// from tasks are captured and the first one rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t max_workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace reasonlab::util
