#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lift/optimizer.hpp"

namespace lift {

enum class CheckpointErrorKind { BadMagic, BadVersion, BadChecksum, Truncated, Io };

struct CheckpointError : std::runtime_error {
    CheckpointErrorKind kind;
    CheckpointError(CheckpointErrorKind k, const std::string& msg)
        : std::runtime_error(msg), kind(k) {}
};

struct NamedMatrix {
    std::string name;
    Matrix value;
};

struct NamedMask {
    std::string name;
    Mask value;
};

struct NamedState {
    std::string name;
    std::uint64_t t;
    Mask mask;
    Vector m;
    Vector v;
};

struct Checkpoint {
    std::vector<NamedMatrix> matrices;
    std::vector<NamedMask> masks;
    std::vector<NamedState> states;
};

inline constexpr char kCheckpointMagic[8] = {'L', 'I', 'F', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Serialized byte count of one optimizer-state record: Theta(k), never a
// function of the dense matrix shape.
std::uint64_t state_record_bytes(const NamedState& state);

}  // namespace lift
