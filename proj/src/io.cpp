#include "adaqat/io.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace adaqat::io {
namespace {

constexpr char kModelMagic[8] = {'A', 'D', 'A', 'Q', 'A', 'T', 'M', 'C'};
constexpr char kDatasetMagic[8] = {'A', 'D', 'A', 'Q', 'A', 'T', 'D', 'S'};

enum class DType : std::uint8_t { F32 = 0, I32 = 1, I8 = 2 };

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    c = crc32(c, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

class Writer {
 public:
  Bytes out;

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    const U u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void crc_since(std::size_t begin) { le(crc(std::span(out).subspan(begin))); }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining())
      throw FormatError("container truncated at offset " + std::to_string(pos_) + " (needs " + std::to_string(n) +
                        " more bytes)");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le() {
    using U = std::make_unsigned_t<T>;
    const auto s = take(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>(u | (static_cast<U>(s[i]) << (8 * i)));
    return static_cast<T>(u);
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  /// Reads a CRC and checks it against bytes [begin, pos).
  void check_crc(std::size_t begin, const char* section) {
    const std::uint32_t expected = crc(bytes_.subspan(begin, pos_ - begin));
    const std::uint32_t stored = le<std::uint32_t>();
    if (stored != expected) throw ChecksumError(begin, section);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// ---- header text ---------------------------------------------------------

struct HeaderLine {
  std::string key;
  std::vector<std::string> positional;
  std::map<std::string, std::string> named;
};

std::vector<HeaderLine> parse_header(std::string_view text) {
  std::vector<HeaderLine> lines;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    HeaderLine h;
    ls >> h.key;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        h.positional.push_back(tok);
      else
        h.named[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    lines.push_back(std::move(h));
  }
  return lines;
}

class HeaderCursor {
 public:
  explicit HeaderCursor(std::vector<HeaderLine> lines) : lines_(std::move(lines)) {}
  const HeaderLine& expect(std::string_view key) {
    if (i_ >= lines_.size()) throw FormatError("header ends before '" + std::string(key) + "'");
    if (lines_[i_].key != key)
      throw FormatError("header line " + std::to_string(i_ + 1) + ": expected '" + std::string(key) + "', got '" +
                        lines_[i_].key + "'");
    return lines_[i_++];
  }
  void finish() const {
    if (i_ != lines_.size()) throw FormatError("unexpected header line '" + lines_[i_].key + "'");
  }

 private:
  std::vector<HeaderLine> lines_;
  std::size_t i_ = 0;
};

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
  T v{};
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw FormatError("bad " + std::string(what) + " value '" + std::string(text) + "'");
  return v;
}

const std::string& field(const HeaderLine& h, const std::string& name) {
  const auto it = h.named.find(name);
  if (it == h.named.end()) throw FormatError("header line '" + h.key + "' lacks field '" + name + "'");
  return it->second;
}

template <typename T>
T num(const HeaderLine& h, const std::string& name) {
  return parse_number<T>(field(h, name), h.key + "." + name);
}

template <typename T>
T pos_num(const HeaderLine& h, std::size_t i) {
  if (i >= h.positional.size()) throw FormatError("header line '" + h.key + "' is too short");
  return parse_number<T>(h.positional[i], h.key);
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape(const HeaderLine& h) {
  Shape s;
  for (std::size_t i = 0; i < h.positional.size(); ++i) s.push_back(pos_num<std::int64_t>(h, i));
  return s;
}

std::string params_text(const QuantParams& p) {
  return "kind=" + kind_name(p.kind) + " bits=" + std::to_string(p.bits) + " scale=" + format_float(p.scale) +
         " zero=" + format_float(p.zero_point);
}

QuantParams parse_params(const HeaderLine& h) {
  QuantParams p;
  const std::string& kind = field(h, "kind");
  if (kind == "weight")
    p.kind = QuantKind::Weight;
  else if (kind == "activation")
    p.kind = QuantKind::Activation;
  else
    throw FormatError("unknown quantization kind '" + kind + "'");
  p.bits = num<int>(h, "bits");
  p.scale = num<float>(h, "scale");
  p.zero_point = num<float>(h, "zero");
  try {
    p.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("invalid quantization params: ") + e.what());
  }
  return p;
}

std::string kind_text(LayerKind k) { return k == LayerKind::Conv2d ? "conv2d" : "linear"; }
LayerKind parse_kind(const std::string& s) {
  if (s == "conv2d") return LayerKind::Conv2d;
  if (s == "linear") return LayerKind::Linear;
  throw FormatError("unknown layer kind '" + s + "'");
}

Activation parse_act(const std::string& s) {
  try {
    return parse_activation(s);
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
}

// ---- blobs -----------------------------------------------------------------

struct Blob {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::vector<float> f32;
  std::vector<std::int32_t> ints;  // I32 and I8
};

void write_blob(Writer& w, const std::string& name, DType dtype, const Shape& shape, std::span<const float> f,
                std::span<const std::int32_t> ints) {
  const std::size_t begin = w.out.size();
  w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
  w.raw(name.data(), name.size());
  w.le<std::uint8_t>(static_cast<std::uint8_t>(dtype));
  w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) w.le<std::int64_t>(d);
  const std::size_t count = dtype == DType::F32 ? f.size() : ints.size();
  const std::size_t width = dtype == DType::I8 ? 1 : 4;
  w.le<std::uint64_t>(count * width);
  if (dtype == DType::F32) {
    for (float v : f) w.f32(v);
  } else if (dtype == DType::I32) {
    for (auto v : ints) w.le<std::int32_t>(v);
  } else {
    for (auto v : ints) {
      if (v < -128 || v > 127) throw Error("blob " + name + ": value " + std::to_string(v) + " does not fit 8 bits");
      w.le<std::int8_t>(static_cast<std::int8_t>(v));
    }
  }
  w.crc_since(begin);
}

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  write_blob(w, name, DType::F32, t.shape(), t.data(), {});
}

Blob read_blob(Reader& r) {
  const std::size_t begin = r.pos();
  Blob b;
  const auto name_len = r.le<std::uint16_t>();
  const auto name = r.take(name_len);
  b.name.assign(name.begin(), name.end());
  const auto dtype = r.le<std::uint8_t>();
  if (dtype > 2) throw ChecksumError(begin, "blob has unknown dtype " + std::to_string(dtype));
  b.dtype = static_cast<DType>(dtype);
  const auto rank = r.le<std::uint8_t>();
  std::int64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const auto d = r.le<std::int64_t>();
    if (d < 0 || d > (std::int64_t{1} << 40)) throw ChecksumError(begin, "blob '" + b.name + "' has a bad extent");
    b.shape.push_back(d);
    count *= d;
  }
  const std::size_t width = b.dtype == DType::I8 ? 1 : 4;
  const auto nbytes = r.le<std::uint64_t>();
  if (nbytes != static_cast<std::uint64_t>(count) * width || nbytes > r.remaining())
    throw ChecksumError(begin, "blob '" + b.name + "' size disagrees with its shape");
  const auto payload = r.take(static_cast<std::size_t>(nbytes));
  r.check_crc(begin, ("blob '" + b.name + "'").c_str());
  Reader p(payload);
  if (b.dtype == DType::F32) {
    b.f32.resize(static_cast<std::size_t>(count));
    for (auto& v : b.f32) v = p.f32();
  } else {
    b.ints.resize(static_cast<std::size_t>(count));
    for (auto& v : b.ints) v = b.dtype == DType::I32 ? p.le<std::int32_t>() : p.le<std::int8_t>();
  }
  return b;
}

class BlobTable {
 public:
  void add(Blob b) {
    const std::string name = b.name;
    if (!blobs_.emplace(name, std::move(b)).second) throw FormatError("duplicate blob '" + name + "'");
  }
  Blob take(const std::string& name, DType dtype, const Shape& shape) {
    const auto it = blobs_.find(name);
    if (it == blobs_.end()) throw FormatError("missing blob '" + name + "'");
    Blob b = std::move(it->second);
    blobs_.erase(it);
    if (b.dtype != dtype) throw FormatError("blob '" + name + "' has the wrong dtype");
    if (b.shape != shape)
      throw FormatError("blob '" + name + "' has shape " + shape_str(b.shape) + ", expected " + shape_str(shape));
    return b;
  }
  bool has(const std::string& name) const { return blobs_.count(name) != 0; }
  void finish() const {
    if (!blobs_.empty()) throw FormatError("unexpected blob '" + blobs_.begin()->first + "'");
  }

 private:
  std::map<std::string, Blob> blobs_;
};

// ---- container framing -----------------------------------------------------

void begin_container(Writer& w, const char (&magic)[8], std::uint32_t version, const std::string& header) {
  w.raw(magic, 8);
  w.le<std::uint32_t>(version);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
  const std::size_t begin = w.out.size();
  w.raw(header.data(), header.size());
  w.crc_since(begin);
}

std::string read_preamble(Reader& r, const char (&magic)[8], std::uint32_t version, const char* what) {
  const auto m = r.take(8);
  if (std::memcmp(m.data(), magic, 8) != 0) throw FormatError(std::string("not ") + what + " (bad magic)");
  const auto v = r.le<std::uint32_t>();
  if (v != version)
    throw FormatError(std::string(what) + " version " + std::to_string(v) + " is not supported (expected " +
                      std::to_string(version) + ")");
  const auto len = r.le<std::uint32_t>();
  const std::size_t begin = r.pos();
  if (len > r.remaining()) throw ChecksumError(begin - 4, "header length exceeds the container");
  const auto text = r.take(len);
  r.check_crc(begin, "header");
  return {text.begin(), text.end()};
}

template <typename F>
auto decode_checked(std::span<const std::uint8_t> bytes, F&& decode) {
  if (bytes.size() < 4) throw FormatError("container is too short");
  const std::size_t body = bytes.size() - 4;
  Reader trailer(bytes.subspan(body));
  const bool file_ok = trailer.le<std::uint32_t>() == crc(bytes.subspan(0, body));
  if (file_ok) return decode(bytes.subspan(0, body));
  // Localize the damage through the per-section checksums when possible.
  try {
    decode(bytes.subspan(0, body));
  } catch (const ChecksumError&) {
    throw;
  } catch (const FormatError& e) {
    throw ChecksumError(body, std::string("whole-file checksum; ") + e.what());
  }
  throw ChecksumError(body, "whole-file checksum");
}

void end_container(Writer& w) { w.crc_since(0); }

// ---- models ----------------------------------------------------------------

std::string layer_text(std::size_t i, const LayerSpec& s) {
  return "layer " + std::to_string(i) + " kind=" + kind_text(s.kind) + " in=" + std::to_string(s.in_channels) +
         " out=" + std::to_string(s.out_channels) + " kernel=" + std::to_string(s.kernel) +
         " stride=" + std::to_string(s.stride) + " padding=" + std::to_string(s.padding) +
         " activation=" + activation_name(s.activation) + " first=" + std::to_string(s.first ? 1 : 0) +
         " last=" + std::to_string(s.last ? 1 : 0) + "\n";
}

LayerSpec parse_layer(const HeaderLine& h, std::size_t i) {
  if (pos_num<std::size_t>(h, 0) != i) throw FormatError("layer lines are out of order");
  LayerSpec s;
  s.kind = parse_kind(field(h, "kind"));
  s.in_channels = num<int>(h, "in");
  s.out_channels = num<int>(h, "out");
  s.kernel = num<int>(h, "kernel");
  s.stride = num<int>(h, "stride");
  s.padding = num<int>(h, "padding");
  s.activation = parse_act(field(h, "activation"));
  s.first = num<int>(h, "first") != 0;
  s.last = num<int>(h, "last") != 0;
  return s;
}

std::string common_header(Stage stage, const Shape& input_shape, int classes, const QuantParams& input,
                          std::size_t layers) {
  return "adaqat-model\nstage " + stage_name(stage) + "\ninput_shape " + shape_text(input_shape) + "\nnum_classes " +
         std::to_string(classes) + "\ninput_params " + params_text(input) + "\nlayers " + std::to_string(layers) +
         "\n";
}

std::string mult_text(const std::string& prefix, const FixedPointMultiplier& m) {
  return " " + prefix + "_mantissa=" + std::to_string(m.mantissa) + " " + prefix + "_shift=" + std::to_string(m.shift);
}

FixedPointMultiplier parse_mult(const HeaderLine& h, const std::string& prefix) {
  FixedPointMultiplier m;
  const int mantissa = num<int>(h, prefix + "_mantissa");
  const int shift = num<int>(h, prefix + "_shift");
  if (mantissa < 0 || mantissa >= (1 << 15) || shift < FixedPointMultiplier::kMinShift ||
      shift > FixedPointMultiplier::kMaxShift)
    throw FormatError("fixed-point multiplier '" + prefix + "' out of range");
  m.mantissa = static_cast<std::int16_t>(mantissa);
  m.shift = static_cast<std::int8_t>(shift);
  return m;
}

ModelContainer decode_model_body(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  HeaderCursor hc(parse_header(read_preamble(r, kModelMagic, kModelFormatVersion, "a model container")));
  const auto blob_count = r.le<std::uint32_t>();
  BlobTable blobs;
  for (std::uint32_t i = 0; i < blob_count; ++i) blobs.add(read_blob(r));
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last blob");

  hc.expect("adaqat-model");
  ModelContainer c;
  const HeaderLine& stage_line = hc.expect("stage");
  if (stage_line.positional.size() != 1) throw FormatError("header 'stage' needs one value");
  c.stage = [&] {
    try {
      return parse_stage(stage_line.positional[0]);
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(e.what());
    }
  }();
  const Shape input_shape = parse_shape(hc.expect("input_shape"));
  const int classes = pos_num<int>(hc.expect("num_classes"), 0);
  const QuantParams input_params = parse_params(hc.expect("input_params"));
  const auto n_layers = pos_num<std::size_t>(hc.expect("layers"), 0);

  if (c.stage != Stage::Lowered) {
    Model m;
    m.stage = c.stage;
    m.input_shape = input_shape;
    m.num_classes = classes;
    m.input_params = input_params;
    for (std::size_t i = 0; i < n_layers; ++i) {
      Layer l;
      l.spec = parse_layer(hc.expect("layer"), i);
      l.spec.weight_params = parse_params(hc.expect("weight_params"));
      l.spec.act_params = parse_params(hc.expect("act_params"));
      l.weight = Tensor(l.spec.weight_shape(), blobs.take(weight_name(i), DType::F32, l.spec.weight_shape()).f32);
      l.bias = Tensor({l.spec.out_channels}, blobs.take(bias_name(i), DType::F32, {l.spec.out_channels}).f32);
      m.layers.push_back(std::move(l));
    }
    try {
      m.validate();
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(std::string("invalid model: ") + e.what());
    }
    c.model = std::move(m);
  } else {
    LoweredModel m;
    m.input_shape = input_shape;
    m.num_classes = classes;
    m.input_params = input_params;
    for (std::size_t i = 0; i < n_layers; ++i) {
      const HeaderLine& h = hc.expect("lowered_layer");
      if (pos_num<std::size_t>(h, 0) != i) throw FormatError("lowered layer lines are out of order");
      LoweredLayer l;
      l.kind = parse_kind(field(h, "kind"));
      l.in_channels = num<int>(h, "in");
      l.out_channels = num<int>(h, "out");
      l.kernel = num<int>(h, "kernel");
      l.stride = num<int>(h, "stride");
      l.padding = num<int>(h, "padding");
      l.bits_in = num<int>(h, "bits_in");
      l.bits_out = num<int>(h, "bits_out");
      l.source_activation = parse_act(field(h, "activation"));
      l.requant = parse_mult(h, "requant");
      l.out_zero = num<std::int32_t>(h, "out_zero");
      l.activation.kind = l.source_activation.kind;
      l.activation.alpha = parse_mult(h, "alpha");
      l.activation.lut_index = parse_mult(h, "lut_index");
      l.q_weights.params = parse_params(hc.expect("weight_params"));
      const QuantParams act = parse_params(hc.expect("act_params"));
      LayerSpec shape_spec;
      shape_spec.kind = l.kind;
      shape_spec.in_channels = l.in_channels;
      shape_spec.out_channels = l.out_channels;
      shape_spec.kernel = l.kernel;
      const Shape wshape = shape_spec.weight_shape();
      l.q_weights.values = IntTensor(wshape, l.q_weights.params.bits,
                                     blobs.take("L" + std::to_string(i) + ".q_weights", DType::I8, wshape).ints);
      l.folded_bias =
          blobs.take("L" + std::to_string(i) + ".folded_bias", DType::I32, {l.out_channels}).ints;
      l.bias_frac = blobs.take("L" + std::to_string(i) + ".bias_frac", DType::I8, {l.out_channels}).ints;
      const std::string lut_name = "L" + std::to_string(i) + ".lut";
      if (blobs.has(lut_name))
        l.activation.lut = blobs.take(lut_name, DType::I32, {IntegerActivation::kLutSize}).ints;
      m.layers.push_back(std::move(l));
      m.act_params.push_back(act);
    }
    try {
      m.validate();
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(std::string("invalid lowered model: ") + e.what());
    }
    c.lowered = std::move(m);
  }
  hc.finish();
  blobs.finish();
  return c;
}

}  // namespace

std::string format_float(float v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

Bytes encode_model(const Model& model) {
  if (model.stage == Stage::Lowered) throw Error("a lowered model is saved with encode_lowered");
  model.validate();
  std::string header = common_header(model.stage, model.input_shape, model.num_classes, model.input_params,
                                     model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& s = model.layers[i].spec;
    header += layer_text(i, s);
    header += "weight_params " + params_text(s.weight_params) + "\n";
    header += "act_params " + params_text(s.act_params) + "\n";
  }
  Writer w;
  begin_container(w, kModelMagic, kModelFormatVersion, header);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(2 * model.layers.size()));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    write_tensor(w, weight_name(i), model.layers[i].weight);
    write_tensor(w, bias_name(i), model.layers[i].bias);
  }
  end_container(w);
  return std::move(w.out);
}

Bytes encode_lowered(const LoweredModel& model) {
  model.validate();
  std::string header =
      common_header(Stage::Lowered, model.input_shape, model.num_classes, model.input_params, model.layers.size());
  std::uint32_t blob_count = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LoweredLayer& l = model.layers[i];
    header += "lowered_layer " + std::to_string(i) + " kind=" + kind_text(l.kind) + " in=" +
              std::to_string(l.in_channels) + " out=" + std::to_string(l.out_channels) +
              " kernel=" + std::to_string(l.kernel) + " stride=" + std::to_string(l.stride) +
              " padding=" + std::to_string(l.padding) + " bits_in=" + std::to_string(l.bits_in) +
              " bits_out=" + std::to_string(l.bits_out) + " activation=" + activation_name(l.source_activation) +
              mult_text("requant", l.requant) + " out_zero=" + std::to_string(l.out_zero) +
              mult_text("alpha", l.activation.alpha) + mult_text("lut_index", l.activation.lut_index) + "\n";
    header += "weight_params " + params_text(l.q_weights.params) + "\n";
    header += "act_params " + params_text(model.act_params[i]) + "\n";
    blob_count += l.activation.lut.empty() ? 3 : 4;
  }
  Writer w;
  begin_container(w, kModelMagic, kModelFormatVersion, header);
  w.le<std::uint32_t>(blob_count);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LoweredLayer& l = model.layers[i];
    const std::string p = "L" + std::to_string(i);
    write_blob(w, p + ".q_weights", DType::I8, l.q_weights.values.shape(), {}, l.q_weights.values.data());
    write_blob(w, p + ".folded_bias", DType::I32, {static_cast<std::int64_t>(l.folded_bias.size())}, {},
               l.folded_bias);
    write_blob(w, p + ".bias_frac", DType::I8, {static_cast<std::int64_t>(l.bias_frac.size())}, {}, l.bias_frac);
    if (!l.activation.lut.empty())
      write_blob(w, p + ".lut", DType::I32, {static_cast<std::int64_t>(l.activation.lut.size())}, {},
                 l.activation.lut);
  }
  end_container(w);
  return std::move(w.out);
}

ModelContainer decode_container(std::span<const std::uint8_t> bytes) {
  return decode_checked(bytes, decode_model_body);
}

Bytes encode_dataset(const Dataset& data) {
  data.validate();
  const std::string header = "adaqat-dataset\ncount " + std::to_string(data.size()) + "\nshape " +
                             shape_text(data.sample_shape) + "\nclasses " + std::to_string(data.num_classes) + "\n";
  Writer w;
  begin_container(w, kDatasetMagic, kDatasetFormatVersion, header);
  const auto numel = static_cast<std::size_t>(data.sample_numel());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t begin = w.out.size();
    for (std::size_t k = 0; k < numel; ++k) w.f32(data.samples[i * numel + k]);
    w.le<std::int32_t>(data.labels[i]);
    w.crc_since(begin);
  }
  end_container(w);
  return std::move(w.out);
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  return decode_checked(bytes, [](std::span<const std::uint8_t> body) {
    Reader r(body);
    HeaderCursor hc(parse_header(read_preamble(r, kDatasetMagic, kDatasetFormatVersion, "a dataset container")));
    hc.expect("adaqat-dataset");
    Dataset d;
    const auto count = pos_num<std::size_t>(hc.expect("count"), 0);
    d.sample_shape = parse_shape(hc.expect("shape"));
    d.num_classes = pos_num<int>(hc.expect("classes"), 0);
    hc.finish();
    if (d.num_classes < 1) throw FormatError("dataset needs at least one class");
    std::int64_t numel = 0;
    try {
      numel = d.sample_numel();
    } catch (const Error& e) {
      throw FormatError(std::string("bad sample shape: ") + e.what());
    }
    const std::size_t record = static_cast<std::size_t>(numel) * 4 + 8;
    if (r.remaining() != count * record)
      throw FormatError("dataset header declares " + std::to_string(count) + " records but the payload holds " +
                        std::to_string(r.remaining() / record));
    d.samples.reserve(count * static_cast<std::size_t>(numel));
    d.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t begin = r.pos();
      for (std::int64_t k = 0; k < numel; ++k) d.samples.push_back(r.f32());
      const auto label = r.le<std::int32_t>();
      r.check_crc(begin, ("record " + std::to_string(i)).c_str());
      if (label < 0 || label >= d.num_classes)
        throw FormatError("record " + std::to_string(i) + " has label " + std::to_string(label) + " outside [0, " +
                          std::to_string(d.num_classes) + ")");
      d.labels.push_back(label);
    }
    return d;
  });
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_model(const std::string& path, const Model& model) { write_file(path, encode_model(model)); }
void save_lowered(const std::string& path, const LoweredModel& model) { write_file(path, encode_lowered(model)); }
ModelContainer load_container(const std::string& path) { return decode_container(read_file(path)); }

Model load_model(const std::string& path) {
  ModelContainer c = load_container(path);
  if (!c.model) throw FormatError("'" + path + "' holds a " + stage_name(c.stage) + " model, expected float or qat");
  return std::move(*c.model);
}

LoweredModel load_lowered(const std::string& path) {
  ModelContainer c = load_container(path);
  if (!c.lowered) throw FormatError("'" + path + "' holds a " + stage_name(c.stage) + " model, expected lowered");
  return std::move(*c.lowered);
}

void save_dataset(const std::string& path, const Dataset& data) { write_file(path, encode_dataset(data)); }
Dataset load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

std::string metrics_csv(const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch,train_loss,train_accuracy,eval_accuracy,input_scale,input_zero";
  const std::size_t layers = history.epochs.empty() ? 0 : history.epochs.front().act_params.size();
  for (std::size_t i = 0; i < layers; ++i)
    os << ",L" << i << "_w_scale,L" << i << "_act_scale,L" << i << "_act_zero";
  os << "\n";
  for (const EpochMetrics& e : history.epochs) {
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_accuracy) << ','
       << format_double(e.eval_accuracy) << ',' << format_float(e.input_params.scale) << ','
       << format_float(e.input_params.zero_point);
    for (std::size_t i = 0; i < e.act_params.size(); ++i)
      os << ',' << format_float(e.weight_params[i].scale) << ',' << format_float(e.act_params[i].scale) << ','
         << format_float(e.act_params[i].zero_point);
    os << "\n";
  }
  return os.str();
}

std::string histogram_csv(const Model& model, const ModelStats& stats) {
  std::ostringstream os;
  os << "layer,activation,bin,bin_lo,bin_hi,count\n";
  auto emit = [&](const std::string& layer, const std::string& act, const ActivationStats& s) {
    const double width = (static_cast<double>(s.max) - s.min) / ActivationStats::kBins;
    for (int b = 0; b < ActivationStats::kBins; ++b)
      os << layer << ',' << act << ',' << b << ',' << format_double(s.min + width * b) << ','
         << format_double(b + 1 == ActivationStats::kBins ? static_cast<double>(s.max) : s.min + width * (b + 1)) << ','
         << s.histogram[static_cast<std::size_t>(b)] << "\n";
  };
  emit("input", "none", stats.input);
  for (std::size_t i = 0; i < stats.layers.size(); ++i)
    emit("L" + std::to_string(i), activation_name(model.layers.at(i).spec.activation), stats.layers[i]);
  return os.str();
}

}  // namespace adaqat::io
