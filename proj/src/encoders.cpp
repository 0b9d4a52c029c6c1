#include "ous/encoders.hpp"

namespace ous {

void EncodersConfig::validate() const {
  check(F > 0, ErrorKind::Config, "encoders: aligned width must be positive");
  check(F_p > 0, ErrorKind::Config, "encoders: polarity width must be positive");
  check(frame_blocks > 0, ErrorKind::Config, "encoders: frames encoder needs at least one block");
  check(frame_heads > 0, ErrorKind::Config, "encoders: head count must be positive");
  check(align_kernel % 2 == 1, ErrorKind::Config, "encoders: alignment kernel width must be odd");
}

Lstm Lstm::make(const std::string& name, size_t in, size_t hidden, uint64_t seed, Dtype dt,
                bool trainable) {
  check(in > 0 && hidden > 0, ErrorKind::Config, "lstm: widths must be positive");
  Lstm l;
  l.hidden = hidden;
  l.wx = make_weight(name + ".wx", {in, 4 * hidden}, seed, 0.02, dt, trainable);
  l.wh = make_weight(name + ".wh", {hidden, 4 * hidden}, seed, 0.02, dt, trainable);
  l.b = make_zeros(name + ".b", {4 * hidden}, dt, trainable);
  return l;
}

Var Lstm::apply(Tape& t, Var x) const {
  // Copy: growing the tape below invalidates references into it.
  const std::vector<size_t> s = x.val().shape();
  check(s.size() == 3, ErrorKind::Shape, "lstm: input must be [B, T, in]");
  check(s[2] == wx->value.shape()[0], ErrorKind::Shape, "lstm: input width mismatch");
  const size_t B = s[0], T = s[1], H = hidden;
  const Dtype dt = x.val().dtype();
  Var h = t.constant(Tensor::zeros({B, H}, dt));
  Var c = t.constant(Tensor::zeros({B, H}, dt));
  std::vector<Var> steps;
  steps.reserve(T);
  for (size_t step = 0; step < T; ++step) {
    Var xt = reshape(slice(x, 1, step, 1), {B, s[2]});
    Var z = add(add(matmul(xt, t.param(wx)), matmul(h, t.param(wh))), t.param(b));
    Var i = sigmoid(slice(z, 1, 0, H));
    Var f = sigmoid(slice(z, 1, H, H));
    Var g = tanh_op(slice(z, 1, 2 * H, H));
    Var o = sigmoid(slice(z, 1, 3 * H, H));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh_op(c));
    steps.push_back(reshape(h, {B, 1, H}));
  }
  return concat(steps, 1);
}

void Lstm::collect(ParamList& out) const {
  out.push_back(wx);
  out.push_back(wh);
  out.push_back(b);
}

FrameEncoder FrameEncoder::make(const std::string& name, size_t frames, size_t D, size_t F,
                                size_t n_blocks, size_t heads, uint64_t seed, Dtype dt) {
  check(frames > 0 && D > 0 && F > 0 && n_blocks > 0, ErrorKind::Config,
        "frame encoder: sizes must be positive");
  FrameEncoder enc;
  enc.pos = make_weight(name + ".pos", {frames, D}, seed, 0.02, dt, true);
  enc.blocks.reserve(n_blocks);
  for (size_t i = 0; i < n_blocks; ++i) {
    enc.blocks.push_back(
        AttentionBlock::make(name + ".block" + std::to_string(i), D, heads, 4 * D, seed, dt, true));
  }
  enc.proj = Linear::make(name + ".proj", D, F, seed, dt, true);
  return enc;
}

Var FrameEncoder::apply(Tape& t, Var x) const {
  const auto& s = x.val().shape();
  check(s.size() == 3, ErrorKind::Shape, "frame encoder: input must be [B, T, D]");
  check(s[1] == pos->value.shape()[0] && s[2] == pos->value.shape()[1], ErrorKind::Shape,
        "frame encoder: frame count or width mismatch with position embedding");
  Var h = add(x, t.param(pos));  // pos broadcasts over the batch axis
  for (const auto& blk : blocks) h = blk.apply(t, h);
  return proj.apply(t, mean_axis(h, 1));
}

void FrameEncoder::collect(ParamList& out) const {
  out.push_back(pos);
  for (const auto& b : blocks) b.collect(out);
  proj.collect(out);
}

Var frames_mean(Tape& t, Var x) {
  (void)t;
  check(x.val().shape().size() == 3, ErrorKind::Shape, "frames mean: input must be [B, T, F]");
  return mean_axis(x, 1);
}

Var pool_early(Tape& t, Var early, size_t batch, size_t frames) {
  const std::vector<size_t> s = early.val().shape();
  check(s.size() == 3, ErrorKind::Shape, "pool: early capture must be [B*T, N, D]");
  check(s[0] == batch * frames, ErrorKind::Shape, "pool: leading axis must equal batch*frames");
  Var per_frame = mean_axis(early, 1);                         // [B*T, D]
  Var grouped = reshape(per_frame, {batch, frames, s[2]});     // [B, T, D]
  (void)t;
  return mean_axis(grouped, 1);                                // [B, D]
}

PolarityHead PolarityHead::make(const std::string& name, size_t D, size_t F_p, uint64_t seed,
                                Dtype dt) {
  check(D > 0 && F_p > 0, ErrorKind::Config, "polarity head: widths must be positive");
  PolarityHead head;
  head.fc1 = Linear::make(name + ".fc1", D, F_p, seed, dt, true);
  head.fc2 = Linear::make(name + ".fc2", F_p, 3, seed, dt, true);
  return head;
}

std::pair<Var, Var> PolarityHead::apply(Tape& t, Var pooled) const {
  const auto& s = pooled.val().shape();
  check(s.size() == 2 && s[1] == fc1.w->value.shape()[0], ErrorKind::Shape,
        "polarity head: input must be [B, D]");
  Var feat = relu(fc1.apply(t, pooled));
  Var logits = fc2.apply(t, feat);
  return {feat, logits};
}

void PolarityHead::collect(ParamList& out) const {
  fc1.collect(out);
  fc2.collect(out);
}

AlignProjector AlignProjector::make(const std::string& name, size_t width, size_t kernel_size,
                                    Dtype dt) {
  check(width > 0, ErrorKind::Config, "align: width must be positive");
  check(kernel_size % 2 == 1 && kernel_size > 0, ErrorKind::Config,
        "align: kernel width must be odd");
  AlignProjector p;
  Tensor k = Tensor::zeros({kernel_size}, dt);
  k.mutable_data()[kernel_size / 2] = 1.0;
  p.kernel = make_const(name + ".kernel", std::move(k), true);
  p.bias = make_zeros(name + ".bias", {1}, dt, true);
  p.fc = Linear::make_identity(name + ".fc", width, dt, true);
  return p;
}

Var AlignProjector::apply(Tape& t, Var x) const {
  const auto& s = x.val().shape();
  check(s.size() == 2 && s[1] == fc.w->value.shape()[0], ErrorKind::Shape,
        "align: input must be [B, F]");
  Var conv = conv1d_same(x, t.param(kernel), t.param(bias));
  return fc.apply(t, conv);
}

void AlignProjector::collect(ParamList& out) const {
  out.push_back(kernel);
  out.push_back(bias);
  fc.collect(out);
}

}  // namespace ous
