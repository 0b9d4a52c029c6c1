#include "ous/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "bytes.hpp"
#include "json.hpp"

using nlohmann::json;

namespace ous {

namespace {

constexpr char kMagic[4] = {'O', 'U', 'S', 'K'};
constexpr uint32_t kVersion = 1;
constexpr size_t kMaxRank = 8;
constexpr uint64_t kMaxElements = 1ull << 28;

uint8_t dtype_code(Dtype dt) { return dt == Dtype::f32 ? 0 : 1; }

[[noreturn]] void bad(const std::string& path, size_t off, const std::string& what) {
  fail(ErrorKind::Checkpoint,
       path + ": " + what + " at offset " + std::to_string(off));
}

}  // namespace

Checkpoint make_checkpoint(const ParamList& params, const std::string& config_json, long epoch,
                           double val_loss) {
  json config;
  try {
    config = json::parse(config_json);
  } catch (const json::exception& e) {
    fail(ErrorKind::Contract, std::string("make_checkpoint: config echo is not JSON: ") + e.what());
  }
  check(std::isfinite(val_loss), ErrorKind::Contract,
        "make_checkpoint: validation loss must be finite");

  Checkpoint ckpt;
  for (const ParamPtr& p : params) ckpt.params.push_back({p->name, p->value});
  std::sort(ckpt.params.begin(), ckpt.params.end(),
            [](const CheckpointEntry& a, const CheckpointEntry& b) { return a.name < b.name; });
  for (size_t i = 1; i < ckpt.params.size(); ++i)
    check(ckpt.params[i - 1].name != ckpt.params[i].name, ErrorKind::Contract,
          "make_checkpoint: duplicate parameter \"" + ckpt.params[i].name + "\"");

  json trailer;
  trailer["config"] = std::move(config);
  trailer["epoch"] = epoch;
  trailer["val_loss"] = val_loss;
  ckpt.trailer = trailer.dump();
  return ckpt;
}

CheckpointInfo checkpoint_info(const Checkpoint& ckpt) {
  json j;
  try {
    j = json::parse(ckpt.trailer);
  } catch (const json::exception& e) {
    fail(ErrorKind::Checkpoint, std::string("checkpoint trailer is not JSON: ") + e.what());
  }
  CheckpointInfo info;
  try {
    info.config_json = j.at("config").dump();
    info.epoch = j.at("epoch").get<long>();
    info.val_loss = j.at("val_loss").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Checkpoint, std::string("checkpoint trailer incomplete: ") + e.what());
  }
  return info;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  check(std::is_sorted(ckpt.params.begin(), ckpt.params.end(),
                       [](const CheckpointEntry& a, const CheckpointEntry& b) {
                         return a.name < b.name;
                       }),
        ErrorKind::Contract, "save_checkpoint: parameters must be sorted by name");

  std::string buf;
  buf.append(kMagic, 4);
  bytes::put_u32(buf, kVersion);
  bytes::put_u32(buf, static_cast<uint32_t>(ckpt.params.size()));
  for (const CheckpointEntry& e : ckpt.params) {
    check(!e.name.empty() && e.name.size() <= 0xffff, ErrorKind::Contract,
          "save_checkpoint: parameter name length out of range");
    check(e.value.rank() >= 1 && e.value.rank() <= kMaxRank, ErrorKind::Contract,
          "save_checkpoint: \"" + e.name + "\" has unsupported rank");
    bytes::put_u16(buf, static_cast<uint16_t>(e.name.size()));
    buf.append(e.name);
    buf.push_back(static_cast<char>(dtype_code(e.value.dtype())));
    buf.push_back(static_cast<char>(e.value.rank()));
    for (size_t a = 0; a < e.value.rank(); ++a)
      bytes::put_u32(buf, static_cast<uint32_t>(e.value.extent(a)));
    if (e.value.dtype() == Dtype::f32) {
      for (size_t i = 0; i < e.value.size(); ++i)
        bytes::put_u32(buf, std::bit_cast<uint32_t>(static_cast<float>(e.value[i])));
    } else {
      for (size_t i = 0; i < e.value.size(); ++i)
        bytes::put_u64(buf, std::bit_cast<uint64_t>(e.value[i]));
    }
  }
  buf.append(ckpt.trailer);
  bytes::put_u64(buf, ckpt.trailer.size());
  bytes::write_file_bytes(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string b = bytes::read_file_bytes(path, ErrorKind::Checkpoint);
  if (b.size() < 20) bad(path, 0, "truncated archive");  // header + trailer length alone
  if (std::memcmp(b.data(), kMagic, 4) != 0) bad(path, 0, "bad magic");
  const uint32_t version = bytes::get_u32(b, 4);
  if (version != kVersion) bad(path, 4, "unsupported version " + std::to_string(version));
  const uint32_t count = bytes::get_u32(b, 8);

  const uint64_t trailer_len = bytes::get_u64(b, b.size() - 8);
  if (trailer_len > b.size() - 20) bad(path, b.size() - 8, "trailer length overruns file");
  const size_t trailer_at = b.size() - 8 - static_cast<size_t>(trailer_len);

  Checkpoint ckpt;
  ckpt.trailer = b.substr(trailer_at, static_cast<size_t>(trailer_len));
  size_t off = 12;
  for (uint32_t n = 0; n < count; ++n) {
    if (off + 2 > trailer_at) bad(path, off, "truncated parameter header");
    const uint16_t name_len = bytes::get_u16(b, off);
    off += 2;
    if (name_len == 0) bad(path, off - 2, "empty parameter name");
    if (off + name_len + 2 > trailer_at) bad(path, off, "truncated parameter header");
    std::string name = b.substr(off, name_len);
    off += name_len;
    const uint8_t code = static_cast<uint8_t>(b[off]);
    const uint8_t rank = static_cast<uint8_t>(b[off + 1]);
    off += 2;
    if (code > 1) bad(path, off - 2, "\"" + name + "\": unknown dtype code");
    if (rank == 0 || rank > kMaxRank) bad(path, off - 1, "\"" + name + "\": unsupported rank");
    if (off + 4 * static_cast<size_t>(rank) > trailer_at)
      bad(path, off, "truncated dimension list");
    std::vector<size_t> shape;
    uint64_t elems = 1;
    for (uint8_t a = 0; a < rank; ++a) {
      const uint32_t dim = bytes::get_u32(b, off);
      off += 4;
      if (dim == 0) bad(path, off - 4, "\"" + name + "\": zero extent");
      elems *= dim;
      if (elems > kMaxElements) bad(path, off - 4, "\"" + name + "\": dim overflow");
      shape.push_back(dim);
    }
    const Dtype dt = code == 0 ? Dtype::f32 : Dtype::f64;
    const size_t width = code == 0 ? 4 : 8;
    if (off + width * static_cast<size_t>(elems) > trailer_at)
      bad(path, off, "\"" + name + "\": truncated payload");
    Tensor value = Tensor::zeros(shape, dt);
    double* dst = value.mutable_data();
    for (uint64_t i = 0; i < elems; ++i) {
      double v;
      if (code == 0) {
        v = static_cast<double>(std::bit_cast<float>(bytes::get_u32(b, off)));
        off += 4;
      } else {
        v = std::bit_cast<double>(bytes::get_u64(b, off));
        off += 8;
      }
      if (!std::isfinite(v)) bad(path, off - width, "\"" + name + "\": non-finite value");
      dst[i] = v;
    }
    value.finalize("load_checkpoint");
    if (!ckpt.params.empty() && !(ckpt.params.back().name < name))
      bad(path, off, "parameter names not strictly increasing near \"" + name + "\"");
    ckpt.params.push_back({std::move(name), std::move(value)});
  }
  if (off != trailer_at) bad(path, off, "payload and trailer overlap or leave a gap");
  return ckpt;
}

void restore_params(const ParamList& params, const Checkpoint& ckpt) {
  std::vector<ParamPtr> sorted(params.begin(), params.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ParamPtr& a, const ParamPtr& b) { return a->name < b->name; });

  size_t i = 0, j = 0;
  while (i < sorted.size() || j < ckpt.params.size()) {
    if (j >= ckpt.params.size() || (i < sorted.size() && sorted[i]->name < ckpt.params[j].name))
      fail(ErrorKind::Checkpoint,
           "checkpoint census mismatch: parameter \"" + sorted[i]->name + "\" missing from archive");
    if (i >= sorted.size() || ckpt.params[j].name < sorted[i]->name)
      fail(ErrorKind::Checkpoint,
           "checkpoint census mismatch: archive has extra parameter \"" + ckpt.params[j].name +
               "\"");
    const Tensor& have = ckpt.params[j].value;
    const Tensor& want = sorted[i]->value;
    check(have.dtype() == want.dtype(), ErrorKind::Checkpoint,
          "checkpoint census mismatch: parameter \"" + sorted[i]->name + "\" dtype differs");
    check(have.same_shape(want), ErrorKind::Checkpoint,
          "checkpoint census mismatch: parameter \"" + sorted[i]->name + "\" has shape " +
              have.shape_str() + ", model expects " + want.shape_str());
    ++i;
    ++j;
  }
  for (size_t k = 0; k < sorted.size(); ++k) sorted[k]->value = ckpt.params[k].value.clone();
}

}  // namespace ous
