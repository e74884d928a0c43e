#include "maskmotion/mask_io.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include "maskmotion/error.h"

namespace maskmotion {
namespace {

Error FormatError(size_t line, const std::string& what) {
  return Error(ErrorCategory::kFormat,
               "line " + std::to_string(line) + ": " + what);
}

template <typename Int>
bool ParseInt(std::string_view s, Int* out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, *out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> SplitWs(std::string_view line) {
  std::vector<std::string_view> tokens;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

}  // namespace

std::string EncodeMaskRle(const FrameMask& mask) {
  std::string out;
  const auto bits = mask.bits();
  size_t i = 0;
  while (i < bits.size()) {
    size_t j = i;
    while (j < bits.size() && bits[j] == bits[i]) ++j;
    if (!out.empty()) out.push_back(',');
    out += std::to_string(bits[i]);
    out.push_back(':');
    out += std::to_string(j - i);
    i = j;
  }
  return out;
}

FrameMask DecodeMaskRle(std::string_view runs, int height, int width) {
  const int64_t total = static_cast<int64_t>(height) * width;
  std::vector<uint8_t> bits;
  bits.reserve(static_cast<size_t>(total));
  int prev_value = -1;
  size_t pos = 0;
  while (pos <= runs.size()) {
    size_t comma = runs.find(',', pos);
    if (comma == std::string_view::npos) comma = runs.size();
    const std::string_view run = runs.substr(pos, comma - pos);
    const size_t colon = run.find(':');
    int value = 0;
    int64_t len = 0;
    if (colon == std::string_view::npos ||
        !ParseInt(run.substr(0, colon), &value) ||
        !ParseInt(run.substr(colon + 1), &len)) {
      throw Error(ErrorCategory::kFormat,
                  "malformed run '" + std::string(run) + "'");
    }
    if (value != 0 && value != 1) {
      throw Error(ErrorCategory::kFormat,
                  "run value must be 0 or 1, got " + std::to_string(value));
    }
    if (len < 1) {
      throw Error(ErrorCategory::kFormat, "run length must be >= 1");
    }
    if (value == prev_value) {
      throw Error(ErrorCategory::kFormat,
                  "adjacent runs share value " + std::to_string(value));
    }
    if (static_cast<int64_t>(bits.size()) + len > total) {
      throw Error(ErrorCategory::kFormat,
                  "runs exceed " + std::to_string(total) + " cells");
    }
    bits.insert(bits.end(), static_cast<size_t>(len),
                static_cast<uint8_t>(value));
    prev_value = value;
    pos = comma + 1;
  }
  if (static_cast<int64_t>(bits.size()) != total) {
    throw Error(ErrorCategory::kFormat,
                "runs cover " + std::to_string(bits.size()) + " cells, expected " +
                    std::to_string(total));
  }
  return FrameMask(height, width, std::move(bits));
}

std::string EncodeSequence(const MaskSequence& sequence) {
  sequence.Validate();
  std::ostringstream os;
  os << "SEQ " << sequence.instance_id << ' ' << sequence.height() << ' '
     << sequence.width() << '\n';
  for (size_t i = 0; i < sequence.frames.size(); ++i) {
    os << "F " << sequence.frame_indices[i] << ' '
       << EncodeMaskRle(sequence.frames[i]) << '\n';
  }
  os << '\n';
  return os.str();
}

std::string EncodeSequences(std::span<const MaskSequence> sequences) {
  std::string out;
  for (const auto& s : sequences) out += EncodeSequence(s);
  return out;
}

std::vector<MaskSequence> DecodeSequences(std::string_view text) {
  std::vector<MaskSequence> result;
  MaskSequence current;
  bool open = false;
  size_t header_line = 0;
  int height = 0;
  int width = 0;

  auto close = [&](size_t line) {
    try {
      current.Validate();
    } catch (const Error& e) {
      throw FormatError(header_line, std::string("sequence ending at line ") +
                                         std::to_string(line) + ": " + e.what());
    }
    result.push_back(std::move(current));
    current = MaskSequence{};
    open = false;
  };

  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    ++line_no;

    const auto tokens = SplitWs(line);
    if (tokens.empty()) {
      if (open) close(line_no);
      continue;
    }
    if (tokens[0] == "SEQ") {
      if (open) throw FormatError(line_no, "SEQ header inside an open sequence");
      if (tokens.size() != 4 || !ParseInt(tokens[2], &height) ||
          !ParseInt(tokens[3], &width) || height < 1 || width < 1) {
        throw FormatError(line_no,
                          "expected 'SEQ <instance_id> <height> <width>'");
      }
      current.instance_id = std::string(tokens[1]);
      header_line = line_no;
      open = true;
    } else if (tokens[0] == "F") {
      if (!open) throw FormatError(line_no, "frame record outside a sequence");
      int64_t index = 0;
      if (tokens.size() != 3 || !ParseInt(tokens[1], &index)) {
        throw FormatError(line_no, "expected 'F <frame_index> <runs>'");
      }
      try {
        current.frames.push_back(DecodeMaskRle(tokens[2], height, width));
      } catch (const Error& e) {
        throw FormatError(line_no, e.what());
      }
      current.frame_indices.push_back(index);
    } else {
      throw FormatError(line_no,
                        "unknown record tag '" + std::string(tokens[0]) + "'");
    }
  }
  if (open) close(line_no);
  return result;
}

MaskSequence DecodeSequence(std::string_view text) {
  auto all = DecodeSequences(text);
  if (all.size() != 1) {
    throw Error(ErrorCategory::kFormat,
                "expected exactly one sequence, found " +
                    std::to_string(all.size()));
  }
  return std::move(all.front());
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCategory::kIo, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCategory::kIo, "cannot write " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCategory::kIo, "write failed for " + path.string());
  }
}

void WriteSequencesFile(const std::filesystem::path& path,
                        std::span<const MaskSequence> sequences) {
  WriteFileBytes(path, EncodeSequences(sequences));
}

std::vector<MaskSequence> ReadSequencesFile(const std::filesystem::path& path) {
  const std::string text = ReadFileBytes(path);
  try {
    return DecodeSequences(text);
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

}  // namespace maskmotion
