#pragma once

// Binary recording format, all integers little-endian u32:
//
//   offset 0   "RDR1"
//   offset 4   N (nodes), F (fast bins), M (pulses), P (participants)
//   offset 20  N frames, node order, each F*M complex64 (re, im float32)
//              row-major over fast time then slow time
//   then       u32 label count L, followed by L quadruples
//              (start, length, class id, participant id)
//
// Nothing may follow the label table.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "radarfuse/radar.hpp"

namespace radarfuse {

std::vector<std::uint8_t> encode_recording(const Recording& recording);
Recording decode_recording(std::span<const std::uint8_t> bytes);

void save_recording(const Recording& recording, const std::filesystem::path& path);
Recording load_recording(const std::filesystem::path& path);

// Shared by the checkpoint codec.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace radarfuse
