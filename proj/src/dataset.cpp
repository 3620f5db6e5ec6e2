#include "zol/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "zol/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian; big-endian hosts are unsupported");

namespace zol::env {

namespace {

constexpr char kMagic[4] = {'Z', 'O', 'L', 'D'};
constexpr std::uint32_t kVersion = 1;

class Reader {
 public:
  Reader(std::istream& is, const std::string& path) : is_(is), path_(path) {}

  template <class T>
  T read(const char* what) {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) throw FormatError(path_ + ": truncated while reading " + std::string(what), off_);
    off_ += sizeof v;
    return v;
  }

  void read_bytes(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (!is_) throw FormatError(path_ + ": truncated while reading " + std::string(what), off_);
    off_ += n;
  }

  std::size_t offset() const { return off_; }

 private:
  std::istream& is_;
  std::string path_;
  std::size_t off_ = 0;
};

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void write_dataset(const OfflineDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint32_t tag_len = static_cast<std::uint32_t>(ds.env_tag.size());
  os.write(reinterpret_cast<const char*>(&tag_len), 4);
  os.write(ds.env_tag.data(), tag_len);
  os.write(reinterpret_cast<const char*>(&ds.seed), 8);
  const std::uint64_t count = ds.count();
  os.write(reinterpret_cast<const char*>(&count), 8);
  os.write(reinterpret_cast<const char*>(&ds.state_dim), 4);
  os.write(reinterpret_cast<const char*>(&ds.action_dim), 4);
  const std::uint8_t has_r = ds.has_reward ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&has_r), 1);
  for (const TransitionRecord& rec : ds.records) {
    write_doubles(os, rec.s);
    write_doubles(os, rec.a);
    write_doubles(os, rec.s_next);
    write_doubles(os, rec.s_plus);
    if (ds.has_reward) os.write(reinterpret_cast<const char*>(&rec.r), 8);
  }
  if (!os) throw IoError("write failed: " + path);
}

OfflineDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  Reader r(is, path);

  char magic[4];
  r.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, expected ZOLD", 0);
  }
  const auto version = r.read<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version), 4);
  }
  const auto tag_len = r.read<std::uint32_t>("env-tag length");
  if (tag_len > 4096) throw FormatError(path + ": implausible env-tag length", 8);
  OfflineDataset ds;
  ds.env_tag.resize(tag_len);
  if (tag_len > 0) r.read_bytes(ds.env_tag.data(), tag_len, "env-tag");
  ds.seed = r.read<std::uint64_t>("seed");
  const auto count = r.read<std::uint64_t>("count");
  ds.state_dim = r.read<std::uint32_t>("state-dim");
  ds.action_dim = r.read<std::uint32_t>("action-dim");
  ds.has_reward = r.read<std::uint8_t>("has-reward") != 0;

  ds.records.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    TransitionRecord& rec = ds.records[i];
    rec.s.resize(ds.state_dim);
    rec.a.resize(ds.action_dim);
    rec.s_next.resize(ds.state_dim);
    rec.s_plus.resize(ds.state_dim);
    r.read_bytes(reinterpret_cast<char*>(rec.s.data()), ds.state_dim * 8, "record s");
    r.read_bytes(reinterpret_cast<char*>(rec.a.data()), ds.action_dim * 8, "record a");
    r.read_bytes(reinterpret_cast<char*>(rec.s_next.data()), ds.state_dim * 8, "record s_next");
    r.read_bytes(reinterpret_cast<char*>(rec.s_plus.data()), ds.state_dim * 8, "record s_plus");
    if (ds.has_reward) rec.r = r.read<double>("record r");
  }
  return ds;
}

void write_dataset_csv(const OfflineDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  std::ostringstream header;
  auto cols = [&header](const char* stem, std::uint32_t n) {
    for (std::uint32_t i = 0; i < n; ++i) header << stem << i << ',';
  };
  cols("s", ds.state_dim);
  cols("a", ds.action_dim);
  cols("s_next", ds.state_dim);
  cols("s_plus", ds.state_dim);
  std::string head = header.str();
  if (ds.has_reward) {
    head += "r";
  } else if (!head.empty()) {
    head.pop_back();
  }
  os << head << '\n';
  os.precision(17);
  for (const TransitionRecord& rec : ds.records) {
    bool first = true;
    auto emit = [&os, &first](const std::vector<double>& v) {
      for (double x : v) {
        if (!first) os << ',';
        os << x;
        first = false;
      }
    };
    emit(rec.s);
    emit(rec.a);
    emit(rec.s_next);
    emit(rec.s_plus);
    if (ds.has_reward) {
      if (!first) os << ',';
      os << rec.r;
    }
    os << '\n';
  }
}

}  // namespace zol::env
