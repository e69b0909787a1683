#include "radarfuse/model.hpp"

#include <cmath>

#include "byte_codec.hpp"
#include "radarfuse/error.hpp"
#include "radarfuse/recording_io.hpp"

namespace radarfuse {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::array<Padding, 4> kConvPadding = {Padding{3, 1}, Padding{1, 1}, Padding{1, 1}, Padding{0, 0}};
constexpr std::array<std::size_t, 4> kKernelH = {7, 3, 3, 1};
constexpr std::array<std::size_t, 4> kKernelW = {3, 3, 3, 1};

}  // namespace

std::size_t ModelConfig::d_model() const {
    const std::size_t cells = pool_h * pool_w;
    return pool_channels == PoolChannels::keep ? kConvChannels.back() * cells : cells;
}

void ModelConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) fail(ErrorKind::config, "model config: " + what);
    };
    need(nodes >= 1, "at least one node is required");
    need(fast_bins >= 1 && window >= 1, "window extents must be positive");
    need(heads >= 1 && head_dim >= 1, "attention needs at least one head of positive width");
    need(classes >= 2, "at least two classes are required");
    need(pool_h >= 1 && pool_w >= 1, "pool target must be positive");
    need(pool_h <= fast_bins && pool_w <= window,
         "pool target " + std::to_string(pool_h) + "x" + std::to_string(pool_w) + " exceeds the window " +
             std::to_string(fast_bins) + "x" + std::to_string(window));
    need(hidden >= 1, "hidden width must be positive");
    need(dropout >= 0.0 && dropout < 1.0, "dropout rate must lie in [0, 1)");
}

std::vector<ParameterSpec> parameter_schema(const ModelConfig& c) {
    std::vector<ParameterSpec> s;
    std::size_t in_ch = ModelConfig::kInputChannels;
    for (std::size_t l = 0; l < 4; ++l) {
        const std::size_t out_ch = ModelConfig::kConvChannels[l];
        const std::size_t fan = in_ch * kKernelH[l] * kKernelW[l];
        const std::string conv = "encoder.conv" + std::to_string(l + 1);
        s.push_back({conv + ".weight", {out_ch, in_ch, kKernelH[l], kKernelW[l]}, fan, false});
        if (l < 3) {
            const std::string bn = "encoder.bn" + std::to_string(l + 1);
            s.push_back({bn + ".gamma", {out_ch}, 0, false});
            s.push_back({bn + ".beta", {out_ch}, 0, true});
        } else {
            s.push_back({conv + ".bias", {out_ch}, fan, true});
        }
        in_ch = out_ch;
    }
    const std::size_t d = c.d_model(), proj = c.heads * c.head_dim;
    s.push_back({"fusion.query", {d, proj}, d, false});
    s.push_back({"fusion.key", {d, proj}, d, false});
    s.push_back({"fusion.value", {d, proj}, d, false});
    s.push_back({"fusion.out.weight", {proj, d}, proj, false});
    s.push_back({"fusion.out.bias", {d}, proj, true});
    s.push_back({"classifier.dense1.weight", {c.embedding_size(), c.hidden}, c.embedding_size(), false});
    s.push_back({"classifier.dense1.bias", {c.hidden}, c.embedding_size(), true});
    s.push_back({"classifier.dense2.weight", {c.hidden, c.classes}, c.hidden, false});
    s.push_back({"classifier.dense2.bias", {c.classes}, c.hidden, true});
    return s;
}

const Tensor& ModelState::param(std::string_view name) const {
    for (const auto& p : params)
        if (p.name == name) return p.value;
    fail(ErrorKind::contract, "model has no parameter named " + std::string(name));
}

Tensor& ModelState::param(std::string_view name) {
    return const_cast<Tensor&>(static_cast<const ModelState&>(*this).param(name));
}

ModelState ModelState::clone() const {
    ModelState out;
    out.config = config;
    out.bn = bn;
    out.params.reserve(params.size());
    for (const auto& p : params) out.params.push_back({p.name, p.value.clone()});
    return out;
}

void ModelState::snap_to_float() {
    auto snap = [](std::span<double> v) {
        for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
    };
    for (auto& p : params) snap(p.value.data_mut());
    for (auto& s : bn) {
        snap(s.running_mean);
        snap(s.running_var);
    }
}

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    ModelState state;
    state.config = config;
    for (const auto& spec : parameter_schema(config)) {
        Tensor t = Tensor::zeros(spec.shape, true);
        auto v = t.data_mut();
        if (spec.fan_in > 0) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& x : v) x = u(rng);
        } else if (!spec.is_bias) {
            std::fill(v.begin(), v.end(), 1.0);
        }
        state.params.push_back({spec.name, std::move(t)});
    }
    for (std::size_t l = 0; l < 3; ++l) state.bn[l] = BatchNormStats(ModelConfig::kConvChannels[l]);
    return state;
}

std::size_t parameter_count(const ModelConfig& config) {
    std::size_t n = 0;
    for (const auto& spec : parameter_schema(config)) n += shape_numel(spec.shape);
    return n;
}

std::size_t parameter_count(const ModelState& state) {
    std::size_t n = 0;
    for (const auto& p : state.params) n += p.value.numel();
    return n;
}

Tensor window_tensor(std::span<const WindowSample* const> batch, const ModelConfig& c) {
    if (batch.empty()) fail(ErrorKind::contract, "window_tensor: empty batch");
    const std::size_t F = c.fast_bins, W = c.window, N = c.nodes, plane = F * W;
    std::vector<double> data(batch.size() * N * 2 * plane);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const WindowSample& s = *batch[b];
        if (s.node_count() != N || s.fast_bins != F || s.window != W) {
            fail(ErrorKind::dimension, "sample has " + std::to_string(s.node_count()) + " nodes of " +
                                           std::to_string(s.fast_bins) + "x" + std::to_string(s.window) +
                                           ", model expects " + std::to_string(N) + " nodes of " + std::to_string(F) +
                                           "x" + std::to_string(W));
        }
        for (std::size_t j = 0; j < N; ++j) {
            const auto& src = s.nodes[j];
            if (src.size() != plane * 2) fail(ErrorKind::dimension, "node tensor size disagrees with its extents");
            double* mag = data.data() + ((b * N + j) * 2) * plane;
            double* ph = mag + plane;
            double peak = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                mag[i] = src[2 * i];
                ph[i] = src[2 * i + 1];
                peak = std::max(peak, std::abs(mag[i]));
            }
            if (c.peak_normalize && peak > 0.0)
                for (std::size_t i = 0; i < plane; ++i) mag[i] /= peak;
        }
    }
    return Tensor::from_data({batch.size() * N, 2, F, W}, std::move(data));
}

namespace {

Tensor encode_impl(const ModelState& s, const Tensor& windows, std::array<BatchNormStats, 3>* train_stats) {
    const auto& c = s.config;
    if (windows.rank() != 4 || windows.dim(1) != ModelConfig::kInputChannels || windows.dim(2) != c.fast_bins ||
        windows.dim(3) != c.window) {
        fail(ErrorKind::dimension, "encoder expects [*, 2, " + std::to_string(c.fast_bins) + ", " +
                                       std::to_string(c.window) + "], got " + shape_str(windows.shape()));
    }
    Tensor x = windows;
    for (std::size_t l = 0; l < 3; ++l) {
        const std::string i = std::to_string(l + 1);
        x = conv2d(x, s.param("encoder.conv" + i + ".weight"), Tensor(), kConvPadding[l]);
        const Tensor& gamma = s.param("encoder.bn" + i + ".gamma");
        const Tensor& beta = s.param("encoder.bn" + i + ".beta");
        x = train_stats ? batchnorm2d_train(x, gamma, beta, (*train_stats)[l]) : batchnorm2d_infer(x, gamma, beta, s.bn[l]);
        x = relu(x);
    }
    x = conv2d(x, s.param("encoder.conv4.weight"), s.param("encoder.conv4.bias"), kConvPadding[3]);
    x = adaptive_avg_pool2d(x, c.pool_h, c.pool_w);
    if (c.pool_channels == PoolChannels::average) x = mean_axis(x, 1);
    return flatten(x);
}

}  // namespace

Tensor encode(const ModelState& state, const Tensor& windows) { return encode_impl(state, windows, nullptr); }

Tensor encode_train(ModelState& state, const Tensor& windows) { return encode_impl(state, windows, &state.bn); }

FusionResult fuse(const ModelState& s, const Tensor& features) {
    const auto& c = s.config;
    const std::size_t d = c.d_model(), H = c.heads, dk = c.head_dim;
    if (features.rank() != 3 || features.dim(2) != d) {
        fail(ErrorKind::dimension, "fusion expects [B, N, " + std::to_string(d) + "], got " + shape_str(features.shape()));
    }
    const std::size_t B = features.dim(0), N = features.dim(1);
    const Tensor rows = reshape(features, {B * N, d});
    auto split_heads = [&](const Tensor& t) {
        return reshape(permute(reshape(t, {B, N, H, dk}), {0, 2, 1, 3}), {B * H, N, dk});
    };
    const Tensor q = split_heads(linear(rows, s.param("fusion.query")));
    const Tensor k = split_heads(linear(rows, s.param("fusion.key")));
    const Tensor v = split_heads(linear(rows, s.param("fusion.value")));
    const Tensor alpha = softmax(scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dk))), 2);
    const Tensor heads = reshape(permute(reshape(bmm(alpha, v), {B, H, N, dk}), {0, 2, 1, 3}), {B * N, H * dk});
    const Tensor projected = linear(heads, s.param("fusion.out.weight"), s.param("fusion.out.bias"));
    return {reshape(add(projected, rows), {B, N, d}), mean_axis(reshape(alpha, {B, H, N, N}), 1)};
}

ClassifierOutput classify(const ModelState& s, const Tensor& embedding, Mode mode, std::mt19937_64* rng) {
    const auto& c = s.config;
    if (embedding.rank() != 2 || embedding.dim(1) != c.embedding_size()) {
        fail(ErrorKind::dimension, "classifier expects [B, " + std::to_string(c.embedding_size()) + "], got " +
                                       shape_str(embedding.shape()));
    }
    Tensor h = relu(linear(embedding, s.param("classifier.dense1.weight"), s.param("classifier.dense1.bias")));
    if (mode == Mode::train && c.dropout > 0.0) {
        if (!rng) fail(ErrorKind::contract, "classify: train mode needs a random generator for dropout");
        h = dropout(h, c.dropout, mode, *rng);
    }
    Tensor logits = linear(h, s.param("classifier.dense2.weight"), s.param("classifier.dense2.bias"));
    Tensor probs = softmax(logits, 1);
    return {std::move(logits), std::move(probs)};
}

ModelOutput head(const ModelState& state, const Tensor& features, Mode mode, std::mt19937_64* rng) {
    auto fused = fuse(state, features);
    const std::size_t B = features.dim(0);
    Tensor embedding = reshape(fused.fused, {B, state.config.embedding_size()});
    auto cls = classify(state, embedding, mode, rng);
    return {features, std::move(embedding), std::move(fused.attention), std::move(cls.logits), std::move(cls.probs)};
}

ModelOutput forward(const ModelState& state, std::span<const WindowSample* const> batch) {
    const auto& c = state.config;
    const Tensor features = reshape(encode(state, window_tensor(batch, c)), {batch.size(), c.nodes, c.d_model()});
    return head(state, features, Mode::infer);
}

ModelOutput forward_train(ModelState& state, std::span<const WindowSample* const> batch, std::mt19937_64& rng) {
    const auto& c = state.config;
    const Tensor features =
        reshape(encode_train(state, window_tensor(batch, c)), {batch.size(), c.nodes, c.d_model()});
    return head(state, features, Mode::train, &rng);
}

// ---- checkpoint ---------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const ModelState& state) {
    const auto& c = state.config;
    detail::ByteWriter w;
    w.reserve(64 + parameter_count(state) * 4);
    w.magic("RFM1");
    w.u32(kCheckpointVersion);
    for (std::size_t v : {c.nodes, c.fast_bins, c.window, c.d_model(), c.heads, c.head_dim, c.classes, c.pool_h,
                          c.pool_w, static_cast<std::size_t>(c.pool_channels == PoolChannels::average), c.hidden,
                          static_cast<std::size_t>(c.peak_normalize)}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    w.u32(static_cast<std::uint32_t>(std::lround(c.dropout * 1e6)));
    for (const auto& p : state.params)
        for (double v : p.value.data()) w.f32(static_cast<float>(v));
    for (const auto& s : state.bn) {
        for (double v : s.running_mean) w.f32(static_cast<float>(v));
        for (double v : s.running_var) w.f32(static_cast<float>(v));
    }
    return w.take();
}

ModelState decode_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("RFM1");
    const std::size_t version_at = r.offset();
    if (const auto version = r.u32(); version != kCheckpointVersion) {
        throw ParseError(version_at, "unsupported checkpoint version " + std::to_string(version));
    }
    const std::size_t config_at = r.offset();
    ModelConfig c;
    c.nodes = r.u32();
    c.fast_bins = r.u32();
    c.window = r.u32();
    const std::size_t d_model = r.u32();
    c.heads = r.u32();
    c.head_dim = r.u32();
    c.classes = r.u32();
    c.pool_h = r.u32();
    c.pool_w = r.u32();
    const std::uint32_t pooling = r.u32();
    c.hidden = r.u32();
    const std::uint32_t normalize = r.u32();
    c.dropout = static_cast<double>(r.u32()) / 1e6;
    if (pooling > 1) throw ParseError(config_at, "unknown pool_channels code " + std::to_string(pooling));
    c.pool_channels = pooling == 1 ? PoolChannels::average : PoolChannels::keep;
    if (normalize > 1) throw ParseError(config_at, "peak_normalize flag must be 0 or 1, got " + std::to_string(normalize));
    c.peak_normalize = normalize == 1;
    try {
        c.validate();
    } catch (const Error& e) {
        throw ParseError(config_at, e.what());
    }
    if (d_model != c.d_model()) {
        throw ParseError(config_at, "header d_model " + std::to_string(d_model) + " disagrees with the pool layout (" +
                                        std::to_string(c.d_model()) + ")");
    }

    ModelState state = init_model(c, 0);
    std::size_t stats = 0;
    for (const auto& s : state.bn) stats += 2 * s.running_mean.size();
    r.require((parameter_count(state) + stats) * 4, "parameter block");
    for (auto& p : state.params)
        for (auto& v : p.value.data_mut()) v = r.f32();
    for (auto& s : state.bn) {
        for (auto& v : s.running_mean) v = r.f32();
        for (auto& v : s.running_var) v = r.f32();
    }
    if (r.remaining() != 0) throw ParseError(r.offset(), std::to_string(r.remaining()) + " unexpected trailing bytes");
    return state;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(state));
}

ModelState load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace radarfuse
