#include "dfm/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "dfm/io/datasets.hpp"

namespace dfm::io {

static_assert(std::endian::native == std::endian::little, "DFMC encoding assumes a little-endian host");

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_section(std::vector<unsigned char>& out, const std::vector<Record>& records) {
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    std::size_t expect = 1;
    for (auto d : r.dims) expect *= d;
    if (r.dims.empty() || expect != r.words.size())
      throw std::invalid_argument("checkpoint record '" + r.name + "' has inconsistent dims");
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) put_u32(out, d);
    for (auto w : r.words) put_u32(out, w);
  }
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, const std::string& origin) : buf_(buf), origin_(origin) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::vector<Record> section(const char* what) {
    const auto count = u32(what);
    std::vector<Record> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      Record r;
      const auto len = u32("name length");
      r.name = bytes(len, "name");
      const auto rank = u32("rank");
      if (rank == 0 || rank > 8) fail("invalid rank " + std::to_string(rank));
      std::uint64_t total = 1;
      for (std::uint32_t d = 0; d < rank; ++d) {
        r.dims.push_back(u32("dims"));
        total *= r.dims.back();
        if (total == 0 || total > (buf_.size() - pos_) / 4 + 1) fail("record '" + r.name + "' dims exceed file size");
      }
      need(total * 4, "tensor data");
      r.words.resize(total);
      std::memcpy(r.words.data(), buf_.data() + pos_, total * 4);
      pos_ += total * 4;
      out.push_back(std::move(r));
    }
    return out;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return buf_.size(); }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(origin_ + ": " + msg + " at offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > buf_.size()) fail(std::string("truncated while reading ") + what);
  }

  const std::vector<unsigned char>& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<std::uint32_t> dims_of(const Shape& s) { return std::vector<std::uint32_t>(s.begin(), s.end()); }

void push_u64(std::vector<std::uint32_t>& w, std::uint64_t v) {
  w.push_back(static_cast<std::uint32_t>(v));
  w.push_back(static_cast<std::uint32_t>(v >> 32));
}
void push_f64(std::vector<std::uint32_t>& w, double v) { push_u64(w, std::bit_cast<std::uint64_t>(v)); }
std::uint64_t get_u64(const std::vector<std::uint32_t>& w, std::size_t i) {
  return std::uint64_t{w.at(i)} | (std::uint64_t{w.at(i + 1)} << 32);
}
double get_f64(const std::vector<std::uint32_t>& w, std::size_t i) { return std::bit_cast<double>(get_u64(w, i)); }

Record words_record(std::string name, std::vector<std::uint32_t> words) {
  if (words.empty()) words.push_back(0);
  Record r{std::move(name), {static_cast<std::uint32_t>(words.size())}, {}};
  r.words = std::move(words);
  return r;
}

const Record& find(const std::vector<Record>& records, const std::string& name, const std::string& origin) {
  for (const auto& r : records)
    if (r.name == name) return r;
  throw FormatError(origin + ": missing record '" + name + "'");
}

void assign(Tensor& dst, const Record& r, const std::string& origin) {
  if (dims_of(dst.shape()) != r.dims)
    throw FormatError(origin + ": record '" + r.name + "' has shape " + to_string(Shape(r.dims.begin(), r.dims.end())) +
                      ", expected " + to_string(dst.shape()));
  std::memcpy(dst.data().data(), r.words.data(), r.words.size() * 4);
}

}  // namespace

std::vector<unsigned char> encode(const CheckpointFile& file) {
  std::vector<unsigned char> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_section(out, file.tensors);
  put_section(out, file.optimizer);
  put_section(out, file.cursor);
  return out;
}

CheckpointFile decode(const std::vector<unsigned char>& bytes, const std::string& origin) {
  Reader rd(bytes, origin);
  if (rd.bytes(4, "magic") != std::string(kCheckpointMagic, 4)) throw FormatError(origin + ": bad magic at offset 0");
  const auto version = rd.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError(origin + ": unsupported version " + std::to_string(version) + " at offset 4");
  CheckpointFile f;
  f.tensors = rd.section("tensor section");
  f.optimizer = rd.section("optimizer section");
  f.cursor = rd.section("cursor section");
  if (rd.pos() != rd.size()) rd.fail("trailing bytes");
  return f;
}

void write_file(const std::string& path, const CheckpointFile& file) {
  const auto bytes = encode(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

CheckpointFile read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  return decode(bytes, path);
}

Record to_record(const std::string& name, const Tensor& t) {
  Record r{name, dims_of(t.shape()), std::vector<std::uint32_t>(t.size())};
  std::memcpy(r.words.data(), t.data().data(), t.size() * 4);
  return r;
}

Tensor to_tensor(const Record& r) {
  auto t = Tensor::zeros(Shape(r.dims.begin(), r.dims.end()));
  std::memcpy(t.data().data(), r.words.data(), r.words.size() * 4);
  return t;
}

void save_checkpoint(const std::string& path, const masking::DefendedModel<float>& model,
                     const train::TrainState& state, std::uint64_t seed) {
  CheckpointFile f;
  for (const auto& e : model.named_tensors()) f.tensors.push_back(to_record(e.name, e.tensor));
  for (const auto& e : state.velocity.entries()) f.optimizer.push_back(to_record(e.name, e.tensor));

  std::vector<std::uint32_t> cursor{static_cast<std::uint32_t>(state.phase), static_cast<std::uint32_t>(state.epoch)};
  push_u64(cursor, static_cast<std::uint64_t>(state.step));
  push_u64(cursor, seed);
  f.cursor.push_back(words_record("cursor", cursor));

  const auto& spec = model.base().spec();
  std::vector<std::uint32_t> arch{static_cast<std::uint32_t>(spec.arch)};
  for (auto d : spec.input) arch.push_back(static_cast<std::uint32_t>(d));
  arch.push_back(static_cast<std::uint32_t>(spec.classes));
  arch.push_back(static_cast<std::uint32_t>(spec.hidden));
  for (auto w : spec.widths) arch.push_back(static_cast<std::uint32_t>(w));
  f.cursor.push_back(words_record("model.arch", arch));

  std::vector<std::uint32_t> dfm;
  double r1 = 0.01, r2 = 0.1;
  for (const auto& u : model.units())
    if (u) {
      r1 = u->r1;
      r2 = u->r2;
      break;
    }
  push_f64(dfm, r1);
  push_f64(dfm, r2);
  for (auto b : model.unit_blocks()) dfm.push_back(b);
  f.cursor.push_back(words_record("model.dfm", dfm));

  // Wall-clock time is left out so identical runs give identical files.
  if (!state.log.empty()) {
    Record log{"log", {static_cast<std::uint32_t>(state.log.size()), 8}, {}};
    for (const auto& m : state.log) {
      log.words.push_back(static_cast<std::uint32_t>(m.phase));
      log.words.push_back(static_cast<std::uint32_t>(m.epoch));
      for (double v : {m.clean_acc, m.robust_acc, m.mean_loss}) push_f64(log.words, v);
    }
    f.cursor.push_back(std::move(log));
  }
  write_file(path, f);
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto f = read_file(path);
  ModelMeta meta;
  const auto& cursor = find(f.cursor, "cursor", path).words;
  const auto& arch = find(f.cursor, "model.arch", path).words;
  const auto& dfm = find(f.cursor, "model.dfm", path).words;
  if (cursor.size() != 6 || arch.size() < 7 || dfm.size() < 4) throw FormatError(path + ": malformed cursor section");
  if (arch[0] > 1) throw FormatError(path + ": unknown architecture id " + std::to_string(arch[0]));
  meta.arch.arch = static_cast<nets::Arch>(arch[0]);
  meta.arch.input = {arch[1], arch[2], arch[3]};
  meta.arch.classes = arch[4];
  meta.arch.hidden = arch[5];
  meta.arch.widths.assign(arch.begin() + 6, arch.end());
  meta.r1 = get_f64(dfm, 0);
  meta.r2 = get_f64(dfm, 2);
  meta.blocks.assign(dfm.begin() + 4, dfm.end());
  meta.seed = get_u64(cursor, 4);

  masking::DefendedModel<float> model(nets::build_model(meta.arch, meta.seed));
  model = masking::insert_dfm(model, std::set<std::uint32_t>(meta.blocks.begin(), meta.blocks.end()), meta.r1,
                              meta.r2, meta.seed);
  auto named = model.named_tensors();
  if (named.size() != f.tensors.size())
    throw FormatError(path + ": expected " + std::to_string(named.size()) + " tensors, found " +
                      std::to_string(f.tensors.size()));
  for (auto& e : named) assign(e.tensor, find(f.tensors, e.name, path), path);

  train::TrainState state;
  state.phase = static_cast<int>(cursor[0]);
  state.epoch = static_cast<int>(cursor[1]);
  state.step = static_cast<std::int64_t>(get_u64(cursor, 2));
  for (const auto& r : f.optimizer) state.velocity.add(r.name, to_tensor(r), false);
  for (const auto& r : f.cursor) {
    if (r.name != "log") continue;
    if (r.dims.size() != 2 || r.dims[1] != 8) throw FormatError(path + ": malformed metrics log");
    for (std::uint32_t i = 0; i < r.dims[0]; ++i) {
      const std::size_t o = i * 8;
      train::EpochMetrics m;
      m.phase = static_cast<int>(r.words[o]);
      m.epoch = static_cast<int>(r.words[o + 1]);
      m.clean_acc = get_f64(r.words, o + 2);
      m.robust_acc = get_f64(r.words, o + 4);
      m.mean_loss = get_f64(r.words, o + 6);
      state.log.push_back(m);
    }
  }
  return Checkpoint{std::move(model), std::move(state), std::move(meta)};
}

}  // namespace dfm::io
