#pragma once

// Flat binary archive of 16 kHz int16 audio and UTF-8 transcripts.
//
// Layout (all integers little-endian):
//   [0, 8)   magic "DOTAARC1"
//   u32      version (1)
//   u64      record count N
//   N x      {u64 audio_off, u64 audio_len_samples, u64 text_off,
//             u64 text_len_bytes, u16 dataset_id}          (34 bytes, packed)
//   u16      dataset count D
//   D x      {u16 byte length, bytes}                       (dataset names)
//   payload  per record: int16 audio samples, then transcript bytes
// Offsets are absolute file offsets.

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dota/common.hpp"
#include "dota/resample.hpp"
#include "dota/wav.hpp"

namespace dota {

inline constexpr char kArchiveMagic[8] = {'D', 'O', 'T', 'A', 'A', 'R', 'C', '1'};
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::size_t kArchiveHeaderBytes = 8 + 4 + 8;
inline constexpr std::size_t kArchiveEntryBytes = 8 * 4 + 2;

struct Record {
  std::vector<std::int16_t> audio;  // 16 kHz mono
  std::string transcript;
  std::string dataset_id;

  bool operator==(const Record&) const = default;
};

struct IndexEntry {
  std::uint64_t audio_off = 0;
  std::uint64_t audio_len = 0;  // samples
  std::uint64_t text_off = 0;
  std::uint64_t text_len = 0;  // bytes
  std::uint16_t dataset = 0;
};

struct ArchiveIndex {
  std::vector<IndexEntry> entries;
  std::vector<std::string> datasets;

  std::size_t size() const { return entries.size(); }
};

/// Returns true when `s` is well-formed UTF-8 (no overlongs or surrogates).
inline bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n;
    char32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c >> 5) == 0x6) {
      n = 1, cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      n = 2, cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      n = 3, cp = c & 0x07;
    } else {
      return false;
    }
    if (i + n >= s.size()) return false;
    for (std::size_t k = 1; k <= n; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000)) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += n + 1;
  }
  return true;
}

inline void validate_record(const Record& r) {
  if (r.audio.empty()) throw FormatError("record has no audio samples");
  if (r.transcript.find('\0') != std::string::npos) throw FormatError("transcript contains a NUL byte");
  if (!is_valid_utf8(r.transcript)) throw FormatError("transcript is not valid UTF-8");
  if (r.dataset_id.empty() || r.dataset_id.size() > 0xFFFF) throw FormatError("invalid dataset id");
}

/// Accumulates records in memory and serializes them in one pass.
class ArchiveWriter {
 public:
  void add(Record r) {
    validate_record(r);
    records_.push_back(std::move(r));
  }

  std::size_t size() const { return records_.size(); }

  ArchiveIndex write(const std::filesystem::path& path) const {
    ArchiveIndex index;
    std::map<std::string, std::uint16_t> ids;
    for (const auto& r : records_) {
      if (!ids.contains(r.dataset_id)) {
        if (index.datasets.size() == 0xFFFF) throw FormatError("too many datasets in one archive");
        ids.emplace(r.dataset_id, static_cast<std::uint16_t>(index.datasets.size()));
        index.datasets.push_back(r.dataset_id);
      }
    }
    std::uint64_t off = kArchiveHeaderBytes + kArchiveEntryBytes * records_.size() + 2;
    for (const auto& d : index.datasets) off += 2 + d.size();
    for (const auto& r : records_) {
      IndexEntry e;
      e.audio_off = off;
      e.audio_len = r.audio.size();
      e.text_off = off + 2 * r.audio.size();
      e.text_len = r.transcript.size();
      e.dataset = ids.at(r.dataset_id);
      off = e.text_off + e.text_len;
      index.entries.push_back(e);
    }

    std::vector<std::uint8_t> head;
    head.insert(head.end(), kArchiveMagic, kArchiveMagic + 8);
    le::put<std::uint32_t>(head, kArchiveVersion);
    le::put<std::uint64_t>(head, index.entries.size());
    for (const auto& e : index.entries) {
      le::put(head, e.audio_off);
      le::put(head, e.audio_len);
      le::put(head, e.text_off);
      le::put(head, e.text_len);
      le::put(head, e.dataset);
    }
    le::put<std::uint16_t>(head, static_cast<std::uint16_t>(index.datasets.size()));
    for (const auto& d : index.datasets) {
      le::put<std::uint16_t>(head, static_cast<std::uint16_t>(d.size()));
      head.insert(head.end(), d.begin(), d.end());
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write archive " + path.string());
    out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
    for (const auto& r : records_) {
      out.write(reinterpret_cast<const char*>(r.audio.data()), static_cast<std::streamsize>(2 * r.audio.size()));
      out.write(r.transcript.data(), static_cast<std::streamsize>(r.transcript.size()));
    }
    out.flush();
    if (!out) throw IoError("write failed for archive " + path.string());
    return index;
  }

 private:
  std::vector<Record> records_;
};

/// Read-only memory mapping of a whole file.
class MappedFile {
 public:
  explicit MappedFile(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) throw IoError("cannot open " + path.string());
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw IoError("cannot stat " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd_, 0);
      if (p == MAP_FAILED) {
        ::close(fd_);
        throw IoError("cannot map " + path.string());
      }
      data_ = static_cast<const std::uint8_t*>(p);
    }
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;
  MappedFile(MappedFile&& o) noexcept
      : fd_(std::exchange(o.fd_, -1)), data_(std::exchange(o.data_, nullptr)), size_(std::exchange(o.size_, 0)) {}
  MappedFile& operator=(MappedFile&& o) noexcept {
    if (this != &o) {
      release();
      fd_ = std::exchange(o.fd_, -1);
      data_ = std::exchange(o.data_, nullptr);
      size_ = std::exchange(o.size_, 0);
    }
    return *this;
  }
  ~MappedFile() { release(); }

  std::span<const std::uint8_t> bytes() const { return {data_, size_}; }

 private:
  void release() {
    if (data_ != nullptr) ::munmap(const_cast<std::uint8_t*>(data_), size_);
    if (fd_ >= 0) ::close(fd_);
    data_ = nullptr;
    fd_ = -1;
  }

  int fd_ = -1;
  const std::uint8_t* data_ = nullptr;
  std::size_t size_ = 0;
};

/// Immutable view of an archive. Safe for concurrent readers.
class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& path) : path_(path), file_(path) { parse(); }

  const std::filesystem::path& path() const { return path_; }
  const ArchiveIndex& index() const { return index_; }
  std::size_t size() const { return index_.size(); }
  const std::vector<std::string>& datasets() const { return index_.datasets; }

  const std::string& dataset_of(std::size_t i) const { return index_.datasets[entry(i).dataset]; }

  std::vector<std::int16_t> audio(std::size_t i) const {
    const auto& e = entry(i);
    std::vector<std::int16_t> out(e.audio_len);
    std::memcpy(out.data(), file_.bytes().data() + e.audio_off, 2 * e.audio_len);
    return out;
  }

  std::string transcript(std::size_t i) const {
    const auto& e = entry(i);
    return {reinterpret_cast<const char*>(file_.bytes().data() + e.text_off), e.text_len};
  }

  Record read(std::size_t i) const { return Record{audio(i), transcript(i), dataset_of(i)}; }

  /// Raw payload bytes of record i (audio followed by transcript).
  std::span<const std::uint8_t> payload(std::size_t i) const {
    const auto& e = entry(i);
    return file_.bytes().subspan(e.audio_off, 2 * e.audio_len + e.text_len);
  }

  /// Record indices belonging to `dataset`, in archive order.
  std::vector<std::size_t> records_of(std::string_view dataset) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (dataset_of(i) == dataset) out.push_back(i);
    return out;
  }

 private:
  const IndexEntry& entry(std::size_t i) const {
    if (i >= index_.size())
      throw std::out_of_range("record index " + std::to_string(i) + " out of range (" +
                              std::to_string(index_.size()) + " records)");
    return index_.entries[i];
  }

  void parse() {
    const auto b = file_.bytes();
    auto fail = [&](const std::string& why) { throw FormatError(path_.string() + ": " + why); };
    if (b.size() < kArchiveHeaderBytes || std::memcmp(b.data(), kArchiveMagic, 8) != 0) fail("bad archive magic");
    if (le::get<std::uint32_t>(b.data() + 8) != kArchiveVersion) fail("unsupported archive version");
    const auto count = le::get<std::uint64_t>(b.data() + 12);
    if (count > (b.size() - kArchiveHeaderBytes) / kArchiveEntryBytes) fail("record count exceeds file size");
    std::size_t off = kArchiveHeaderBytes;
    index_.entries.resize(count);
    for (auto& e : index_.entries) {
      const auto* p = b.data() + off;
      e.audio_off = le::get<std::uint64_t>(p);
      e.audio_len = le::get<std::uint64_t>(p + 8);
      e.text_off = le::get<std::uint64_t>(p + 16);
      e.text_len = le::get<std::uint64_t>(p + 24);
      e.dataset = le::get<std::uint16_t>(p + 32);
      off += kArchiveEntryBytes;
    }
    if (off + 2 > b.size()) fail("truncated dataset table");
    const auto n_datasets = le::get<std::uint16_t>(b.data() + off);
    off += 2;
    for (std::size_t d = 0; d < n_datasets; ++d) {
      if (off + 2 > b.size()) fail("truncated dataset table");
      const auto len = le::get<std::uint16_t>(b.data() + off);
      off += 2;
      if (off + len > b.size()) fail("truncated dataset table");
      index_.datasets.emplace_back(reinterpret_cast<const char*>(b.data() + off), len);
      off += len;
    }
    const std::uint64_t payload_start = off;
    std::uint64_t prev_audio = 0, prev_text = 0;
    for (std::size_t i = 0; i < index_.entries.size(); ++i) {
      const auto& e = index_.entries[i];
      if (e.audio_off < payload_start || e.audio_len > (b.size() - e.audio_off) / 2)
        fail("audio blob of record " + std::to_string(i) + " lies outside the file");
      if (e.text_off < payload_start || e.text_off > b.size() || e.text_len > b.size() - e.text_off)
        fail("text blob of record " + std::to_string(i) + " lies outside the file");
      if (i > 0 && (e.audio_off <= prev_audio || e.text_off <= prev_text))
        fail("index offsets are not strictly increasing at record " + std::to_string(i));
      if (e.dataset >= index_.datasets.size()) fail("dataset id out of range at record " + std::to_string(i));
      prev_audio = e.audio_off;
      prev_text = e.text_off;
    }
  }

  std::filesystem::path path_;
  MappedFile file_;
  ArchiveIndex index_;
};

struct IngestSource {
  std::filesystem::path audio;
  std::string transcript;
  std::string dataset_id;
};

struct IngestError {
  std::size_t source_index;
  std::string message;
};

struct IngestResult {
  ArchiveIndex index;
  std::vector<IngestError> errors;
};

/// Decodes a waveform to 16 kHz mono int16.
inline std::vector<std::int16_t> to_archive_audio(const Waveform& w) {
  if (w.sample_rate == kSampleRate) return to_pcm16(w.samples);
  return to_pcm16(resample(w.samples, w.sample_rate, kSampleRate));
}

/// Decodes, resamples and stores every source. Sources that fail to decode
/// are reported in `errors` and skipped; a failure to write is fatal.
inline IngestResult ingest(std::span<const IngestSource> sources, const std::filesystem::path& out) {
  IngestResult result;
  ArchiveWriter writer;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    try {
      writer.add(Record{to_archive_audio(read_wav(s.audio)), s.transcript, s.dataset_id});
    } catch (const Error& e) {
      result.errors.push_back({i, e.what()});
    }
  }
  result.index = writer.write(out);
  return result;
}

/// Parses a TSV manifest of `audio_path \t transcript \t dataset_id` rows.
/// Relative audio paths resolve against the manifest's directory.
inline std::vector<IngestSource> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::vector<IngestSource> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    std::filesystem::path audio = line.substr(0, t1);
    if (audio.is_relative()) audio = manifest.parent_path() / audio;
    out.push_back({audio, line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
  }
  return out;
}

}  // namespace dota
