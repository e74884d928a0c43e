#ifndef MASKMOTION_MASK_IO_H_
#define MASKMOTION_MASK_IO_H_

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskmotion/mask.h"

namespace maskmotion {

// Line-delimited mask-sequence text format:
//
//   SEQ <instance_id> <height> <width>
//   F <frame_index> <v0>:<len0>,<v1>:<len1>,...
//   ...
//   <blank line>
//
// Runs scan the grid in row-major order, cover exactly height*width cells and
// alternate in value, so a given mask has exactly one encoding.

std::string EncodeMaskRle(const FrameMask& mask);
// Throws kFormat on a malformed run list or a cell count mismatch.
FrameMask DecodeMaskRle(std::string_view runs, int height, int width);

std::string EncodeSequence(const MaskSequence& sequence);
std::string EncodeSequences(std::span<const MaskSequence> sequences);

// Parse errors carry the 1-based line number of the offending record.
std::vector<MaskSequence> DecodeSequences(std::string_view text);
// Requires exactly one sequence in `text`.
MaskSequence DecodeSequence(std::string_view text);

void WriteSequencesFile(const std::filesystem::path& path,
                        std::span<const MaskSequence> sequences);
std::vector<MaskSequence> ReadSequencesFile(const std::filesystem::path& path);

// Whole-file helpers shared by the dataset and checkpoint writers.
std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace maskmotion

#endif  // MASKMOTION_MASK_IO_H_
