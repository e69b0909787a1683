#include "radarfuse/comms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "radarfuse/error.hpp"
#include "seeding.hpp"

namespace radarfuse {

Rational Rational::of(std::uint64_t num, std::uint64_t den) {
    if (den == 0) fail(ErrorKind::contract, "rational with zero denominator");
    const std::uint64_t g = std::gcd(num, den);
    return g == 0 ? Rational{0, 1} : Rational{num / g, den / g};
}

std::string Rational::str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

// ---- schemes --------------------------------------------------------------------

CompressionScheme CompressionScheme::encoder(std::size_t pool_h, std::size_t pool_w) {
    CompressionScheme s;
    s.kind = SchemeKind::encoder;
    s.pool_h = pool_h;
    s.pool_w = pool_w;
    return s;
}

CompressionScheme CompressionScheme::downsample(std::size_t ratio) {
    CompressionScheme s;
    s.kind = SchemeKind::downsample;
    s.ratio = ratio;
    return s;
}

void CompressionScheme::validate() const {
    if (kind == SchemeKind::encoder && (pool_h == 0 || pool_w == 0 || depth == 0))
        fail(ErrorKind::config, "encoder scheme needs a positive pool target and channel depth");
    if (kind == SchemeKind::downsample && ratio == 0) fail(ErrorKind::config, "downsample ratio must be at least 1");
}

std::size_t CompressionScheme::payload(std::size_t fast_bins, std::size_t window) const {
    validate();
    if (kind == SchemeKind::encoder) return pool_h * pool_w * depth;
    const std::size_t kept = fast_bins / ratio;
    if (kept == 0) {
        fail(ErrorKind::config, "downsample ratio " + std::to_string(ratio) + " leaves no fast bins out of " +
                                    std::to_string(fast_bins));
    }
    return kept * window * ModelConfig::kInputChannels;
}

std::string CompressionScheme::kind_name() const { return kind == SchemeKind::encoder ? "encoder" : "downsample"; }

std::string CompressionScheme::setting() const {
    return kind == SchemeKind::encoder ? std::to_string(pool_h) + "x" + std::to_string(pool_w) : std::to_string(ratio);
}

std::vector<CompressionScheme> reference_encoder_schemes() {
    return {CompressionScheme::encoder(5, 2), CompressionScheme::encoder(5, 4), CompressionScheme::encoder(5, 8),
            CompressionScheme::encoder(10, 4), CompressionScheme::encoder(10, 8)};
}

std::vector<CompressionScheme> reference_downsample_schemes() {
    return {CompressionScheme::downsample(2), CompressionScheme::downsample(5), CompressionScheme::downsample(10),
            CompressionScheme::downsample(20)};
}

Rational compression_factor(const CompressionScheme& scheme, std::size_t fast_bins, std::size_t window) {
    if (fast_bins == 0 || window == 0) fail(ErrorKind::config, "compression factor needs a non-empty window");
    return Rational::of(fast_bins * window * ModelConfig::kInputChannels, scheme.payload(fast_bins, window));
}

// ---- channel --------------------------------------------------------------------

std::vector<double> transmit(std::span<const double> payload, const ChannelModel& channel) {
    if (payload.empty()) fail(ErrorKind::contract, "transmit: empty payload");
    if (std::isnan(channel.snr_db) || channel.snr_db == -std::numeric_limits<double>::infinity())
        fail(ErrorKind::config, "transmit: SNR must be finite or +inf");
    std::vector<double> out(payload.begin(), payload.end());
    if (channel.snr_db == ChannelModel::kNoiseless) return out;
    double power = 0.0;
    for (double v : payload) power += v * v;
    power /= static_cast<double>(payload.size());
    if (!(power > 0.0)) fail(ErrorKind::degenerate, "transmit: zero-power payload has no defined SNR");
    const double noise_std = std::sqrt(power / std::pow(10.0, channel.snr_db / 10.0));
    std::mt19937_64 rng(channel.seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    for (double& v : out) v += noise(rng);
    return out;
}

// ---- pipelines ------------------------------------------------------------------

WindowSample decimate(const WindowSample& sample, std::size_t ratio) {
    if (ratio == 0) fail(ErrorKind::config, "decimate: ratio must be at least 1");
    const std::size_t kept = sample.fast_bins / ratio;
    if (kept == 0) {
        fail(ErrorKind::config, "decimate: ratio " + std::to_string(ratio) + " leaves no fast bins out of " +
                                    std::to_string(sample.fast_bins));
    }
    WindowSample out;
    out.fast_bins = kept;
    out.window = sample.window;
    out.label = sample.label;
    out.participant = sample.participant;
    const std::size_t row = sample.window * 2;
    for (const auto& node : sample.nodes) {
        std::vector<float> d(kept * row);
        for (std::size_t n = 0; n < kept; ++n)
            std::copy_n(node.begin() + static_cast<std::ptrdiff_t>(n * ratio * row), row,
                        d.begin() + static_cast<std::ptrdiff_t>(n * row));
        out.nodes.push_back(std::move(d));
    }
    return out;
}

ModelConfig downsampled_config(const ModelConfig& base, std::size_t ratio) {
    if (ratio == 0) fail(ErrorKind::config, "downsample ratio must be at least 1");
    ModelConfig c = base;
    c.fast_bins = base.fast_bins / ratio;
    if (c.fast_bins == 0) fail(ErrorKind::config, "downsample ratio " + std::to_string(ratio) + " leaves no fast bins");
    c.pool_h = std::min(c.pool_h, c.fast_bins);
    c.validate();
    return c;
}

ModelConfig encoder_config(const ModelConfig& base, const CompressionScheme& scheme) {
    if (scheme.kind != SchemeKind::encoder) fail(ErrorKind::config, "encoder_config: not an encoder scheme");
    if (scheme.depth != ModelConfig::kConvChannels.back())
        fail(ErrorKind::config, "encoder scheme depth must equal the encoder's output channels");
    ModelConfig c = base;
    c.pool_h = scheme.pool_h;
    c.pool_w = scheme.pool_w;
    c.pool_channels = PoolChannels::keep;
    c.validate();
    return c;
}

ModelOutput pipeline_encoder(std::span<const WindowSample* const> batch, const ModelState& state,
                             const CompressionScheme& scheme, const ChannelModel& channel) {
    const auto& c = state.config;
    if (scheme.kind != SchemeKind::encoder || scheme.pool_h != c.pool_h || scheme.pool_w != c.pool_w ||
        c.pool_channels != PoolChannels::keep || scheme.depth != ModelConfig::kConvChannels.back()) {
        fail(ErrorKind::config, "pipeline_encoder: scheme " + scheme.kind_name() + " " + scheme.setting() +
                                    " does not match the model's pool target " + std::to_string(c.pool_h) + "x" +
                                    std::to_string(c.pool_w));
    }
    NoGradGuard no_grad;
    Tensor features = encode(state, window_tensor(batch, c));
    if (channel.snr_db != ChannelModel::kNoiseless) {
        const std::size_t d = c.d_model();
        const auto sent = features.data();
        std::vector<double> received(sent.size());
        for (std::size_t k = 0; k < batch.size() * c.nodes; ++k) {
            const auto noisy = transmit(sent.subspan(k * d, d),
                                        {channel.snr_db, detail::mix_seed(channel.seed, k / c.nodes, k % c.nodes)});
            std::copy(noisy.begin(), noisy.end(), received.begin() + static_cast<std::ptrdiff_t>(k * d));
        }
        features = Tensor::from_data(features.shape(), std::move(received));
    }
    return head(state, reshape(features, {batch.size(), c.nodes, c.d_model()}), Mode::infer);
}

ModelOutput pipeline_downsample(std::span<const WindowSample* const> batch, std::size_t ratio,
                                const ModelState& state_ds, const ChannelModel& channel) {
    const auto& c = state_ds.config;
    std::vector<WindowSample> received;
    received.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        WindowSample s = decimate(*batch[b], ratio);
        if (s.fast_bins != c.fast_bins) {
            fail(ErrorKind::config, "pipeline_downsample: ratio " + std::to_string(ratio) + " yields " +
                                        std::to_string(s.fast_bins) + " fast bins, model expects " +
                                        std::to_string(c.fast_bins));
        }
        if (channel.snr_db != ChannelModel::kNoiseless) {
            for (std::size_t j = 0; j < s.nodes.size(); ++j) {
                auto& node = s.nodes[j];
                const std::vector<double> sent(node.begin(), node.end());
                const auto noisy = transmit(sent, {channel.snr_db, detail::mix_seed(channel.seed, b, j)});
                std::transform(noisy.begin(), noisy.end(), node.begin(), [](double v) { return static_cast<float>(v); });
            }
        }
        received.push_back(std::move(s));
    }
    std::vector<const WindowSample*> ptrs;
    for (const auto& s : received) ptrs.push_back(&s);
    NoGradGuard no_grad;
    return forward(state_ds, ptrs);
}

double channel_accuracy(std::span<const WindowSample* const> samples, const ModelState& state,
                        const CompressionScheme& scheme, const ChannelModel& channel, std::size_t batch_size) {
    if (samples.empty()) fail(ErrorKind::contract, "channel_accuracy: no samples");
    if (batch_size == 0) batch_size = samples.size();
    const std::size_t C = state.config.classes;
    std::size_t correct = 0;
    for (std::size_t at = 0, chunk_no = 0; at < samples.size(); at += batch_size, ++chunk_no) {
        const auto chunk = samples.subspan(at, std::min(batch_size, samples.size() - at));
        const ChannelModel ch{channel.snr_db, detail::mix_seed(channel.seed, 0x63686e6bULL, chunk_no)};
        const auto out = scheme.kind == SchemeKind::encoder ? pipeline_encoder(chunk, state, scheme, ch)
                                                            : pipeline_downsample(chunk, scheme.ratio, state, ch);
        const auto probs = out.probs.data();
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            const auto row = probs.subspan(b * C, C);
            const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
            correct += pred == chunk[b]->label;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// ---- sweep ----------------------------------------------------------------------

std::vector<TrainedScheme> train_schemes(std::span<const WindowSample> samples, const DatasetSplit& split,
                                         const ModelConfig& base, const TrainConfig& train_cfg,
                                         const HybridLossConfig& loss, std::span<const CompressionScheme> schemes) {
    std::vector<TrainedScheme> out;
    for (const auto& scheme : schemes) {
        scheme.validate();
        if (scheme.kind == SchemeKind::encoder) {
            auto r = train(samples, split, encoder_config(base, scheme), train_cfg, loss);
            out.push_back({scheme, std::move(r.state), std::move(r.report)});
        } else {
            std::vector<WindowSample> reduced;
            reduced.reserve(samples.size());
            for (const auto& s : samples) reduced.push_back(decimate(s, scheme.ratio));
            auto r = train(reduced, split, downsampled_config(base, scheme.ratio), train_cfg, loss);
            out.push_back({scheme, std::move(r.state), std::move(r.report)});
        }
    }
    return out;
}

SweepResult snr_sweep(std::span<const TrainedScheme> models, std::span<const double> snr_db,
                      std::span<const std::uint64_t> seeds, std::span<const WindowSample* const> samples) {
    if (models.empty() || snr_db.empty() || seeds.empty()) fail(ErrorKind::config, "snr_sweep: empty grid");
    if (samples.empty()) fail(ErrorKind::contract, "snr_sweep: no samples");
    const std::size_t F = samples.front()->fast_bins, W = samples.front()->window;
    SweepResult result;
    for (const auto& m : models) {
        const Rational factor = compression_factor(m.scheme, F, W);
        for (double snr : snr_db) {
            SweepSummary sum{m.scheme, factor, snr, 0.0, 0.0, seeds.size()};
            std::vector<double> acc;
            for (auto seed : seeds) {
                const double a = channel_accuracy(samples, m.state, m.scheme, {snr, seed});
                result.rows.push_back({m.scheme, factor, snr, seed, a});
                acc.push_back(a);
            }
            sum.mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
            double var = 0.0;
            for (double a : acc) var += (a - sum.mean) * (a - sum.mean);
            sum.stddev = std::sqrt(var / static_cast<double>(acc.size()));
            result.summary.push_back(sum);
        }
    }
    return result;
}

namespace {

std::string snr_str(double snr) {
    if (std::isinf(snr)) return snr > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << snr;
    return os.str();
}

}  // namespace

std::string to_csv(std::span<const SweepRow> rows) {
    std::ostringstream os;
    os.precision(10);
    os << "scheme,pool_or_ratio,compression_factor,snr_db,seed,accuracy\n";
    for (const auto& r : rows) {
        os << r.scheme.kind_name() << ',' << r.scheme.setting() << ',' << r.factor.value() << ',' << snr_str(r.snr_db)
           << ',' << r.seed << ',' << r.accuracy << '\n';
    }
    return os.str();
}

std::string to_csv(std::span<const SweepSummary> rows) {
    std::ostringstream os;
    os.precision(10);
    os << "scheme,pool_or_ratio,compression_factor,snr_db,seeds,mean_accuracy,std_accuracy\n";
    for (const auto& r : rows) {
        os << r.scheme.kind_name() << ',' << r.scheme.setting() << ',' << r.factor.value() << ',' << snr_str(r.snr_db)
           << ',' << r.seeds << ',' << r.mean << ',' << r.stddev << '\n';
    }
    return os.str();
}

}  // namespace radarfuse
