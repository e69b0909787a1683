#include "radarfuse/radar.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "radarfuse/error.hpp"
#include "seeding.hpp"

namespace radarfuse {

namespace {

using detail::mix_seed;

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

double transient_shape(const MotionProfile& p, double s) {
    if (p.transient == Transient::none || !(p.duration > 0.0)) return 0.0;
    const double u = (s - p.onset) / p.duration;
    if (p.transient == Transient::step) return smoothstep(u);
    return (u <= 0.0 || u >= 1.0) ? 0.0 : std::pow(std::sin(kPi * u), 2);
}

}  // namespace

double wrap_phase(double angle) {
    double r = std::remainder(angle, 2.0 * kPi);
    if (r <= -kPi) r += 2.0 * kPi;
    return r;
}

// ---- RadarConfig ----------------------------------------------------------------

double RadarConfig::max_range() const {
    return static_cast<double>(fast_bins) * fast_time_period * kSpeedOfLight / 2.0;
}

void RadarConfig::validate() const {
    if (fast_bins < 1) fail(ErrorKind::config, "radar: fast-time bin count must be at least 1");
    if (!(fast_time_period > 0.0)) fail(ErrorKind::config, "radar: fast-time sampling period must be positive");
    if (!(pri > 0.0)) fail(ErrorKind::config, "radar: pulse repetition interval must be positive");
    if (!(pulse_width > 0.0)) fail(ErrorKind::config, "radar: pulse width must be positive");
    if (nodes.empty()) fail(ErrorKind::config, "radar: at least one node is required");
}

RadarConfig RadarConfig::ring(std::size_t fast_bins, std::size_t nodes, double ring_radius, double max_range) {
    RadarConfig cfg;
    cfg.fast_bins = fast_bins;
    cfg.fast_time_period = fast_bins ? 2.0 * max_range / (kSpeedOfLight * static_cast<double>(fast_bins)) : 0.0;
    cfg.pulse_width = std::max(0.3e-9, 0.75 * cfg.fast_time_period);
    for (std::size_t j = 0; j < nodes; ++j) {
        const double a = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(nodes);
        cfg.nodes.push_back({ring_radius * std::cos(a), ring_radius * std::sin(a)});
    }
    return cfg;
}

RadarConfig SynthesisConfig::geometry_radar(std::size_t fast_bins, std::size_t nodes) {
    const double nearest = 2.0, step = 1.0;
    const double farthest = nearest + step * static_cast<double>(nodes ? nodes - 1 : 0);
    RadarConfig cfg = RadarConfig::ring(fast_bins, nodes, 1.0, std::max(7.2, farthest + 2.0));
    for (std::size_t j = 0; j < nodes; ++j) {
        const double a = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(nodes);
        const double d = nearest + step * static_cast<double>(j);
        cfg.nodes[j] = {d * std::cos(a), d * std::sin(a)};
    }
    // Absolute noise floor: the nearest node sees roughly 30 dB SNR, the farthest about 10 dB,
    // so every node stays informative but usefulness falls off with distance.
    cfg.noise_reference = NoiseReference::absolute;
    cfg.reference_amplitude = 1.0;
    cfg.noise_db = 20.0 * std::log10(1.0 / (farthest * farthest)) - 10.0;
    return cfg;
}

// ---- MotionProfile --------------------------------------------------------------

Point2 MotionProfile::position(double t) const {
    double s = span > 0.0 ? t / span : 0.0;
    if (time_reversed) s = 1.0 - s;
    const double walked = speed * span * std::clamp(std::min(s, walk_until), 0.0, 1.0);
    const double shape = transient_shape(*this, s);
    const double along = walked + displacement * shape;
    return {start.x + along * std::cos(heading), start.y + along * std::sin(heading)};
}

double MotionProfile::range(Point2 node, double t) const {
    const Point2 p = position(t);
    const double geometric = std::hypot(p.x - node.x, p.y - node.y);
    return geometric + micro_amplitude * std::sin(2.0 * kPi * micro_frequency * t + micro_phase);
}

double MotionProfile::attenuation(double t, double r) const {
    double s = span > 0.0 ? t / span : 0.0;
    if (time_reversed) s = 1.0 - s;
    const double shape = transient_shape(*this, s);
    return reflectivity * (1.0 + reflectivity_change * shape) / (r * r);
}

// ---- generation -----------------------------------------------------------------

ComplexFrame generate_frame(const RadarConfig& cfg, const MotionProfile& profile, std::size_t node,
                            std::size_t pulses, std::uint64_t seed) {
    cfg.validate();
    if (pulses < 1) fail(ErrorKind::contract, "generate_frame: at least one pulse is required");
    if (node >= cfg.nodes.size()) {
        fail(ErrorKind::index, "generate_frame: node " + std::to_string(node) + " not in configuration of " +
                                   std::to_string(cfg.nodes.size()) + " nodes");
    }
    const std::size_t F = cfg.fast_bins;
    const double max_range = cfg.max_range();
    const double two_sigma_sq = 2.0 * cfg.pulse_width * cfg.pulse_width;
    // Beyond 8 sigma the envelope is below 1e-13 of its peak.
    const double reach = 8.0 * cfg.pulse_width;

    std::vector<std::complex<double>> clean(F * pulses, {0.0, 0.0});
    double peak = 0.0;
    for (std::size_t m = 0; m < pulses; ++m) {
        const double t = static_cast<double>(m) * cfg.pri;
        const double r = profile.range(cfg.nodes[node], t);
        if (!(r > 0.0) || r >= max_range || !std::isfinite(r)) {
            fail(ErrorKind::range, "generate_frame: node " + std::to_string(node) + " target range " + std::to_string(r) +
                                       " m at pulse " + std::to_string(m) + " outside unambiguous range (0, " +
                                       std::to_string(max_range) + ") m");
        }
        const double delay = 2.0 * r / kSpeedOfLight;
        const double alpha = profile.attenuation(t, r);
        const std::complex<double> carrier = std::polar(1.0, cfg.carrier_angular_frequency * delay);
        const auto lo = static_cast<long>(std::floor((delay - reach) / cfg.fast_time_period));
        const auto hi = static_cast<long>(std::ceil((delay + reach) / cfg.fast_time_period));
        for (long n = std::max(0L, lo); n <= std::min(static_cast<long>(F) - 1, hi); ++n) {
            const double dt = static_cast<double>(n) * cfg.fast_time_period - delay;
            const double envelope = std::exp(-dt * dt / two_sigma_sq);
            const auto y = alpha * envelope * carrier;
            clean[static_cast<std::size_t>(n) * pulses + m] = y;
            peak = std::max(peak, std::abs(y));
        }
    }

    ComplexFrame frame;
    frame.node = node;
    frame.fast_bins = F;
    frame.pulses = pulses;
    frame.samples.resize(F * pulses);
    const double reference = cfg.noise_reference == NoiseReference::frame_peak ? peak : cfg.reference_amplitude;
    const double noise_power = reference * reference * std::pow(10.0, cfg.noise_db / 10.0);
    const double sigma = std::sqrt(noise_power / 2.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        std::complex<double> y = clean[i];
        if (sigma > 0.0) {
            const double re = gauss(rng), im = gauss(rng);
            y += std::complex<double>(sigma * re, sigma * im);
        }
        frame.samples[i] = std::complex<float>(static_cast<float>(y.real()), static_cast<float>(y.imag()));
    }
    return frame;
}

MotionProfile activity_template(int activity) {
    MotionProfile p;
    p.activity = activity;
    switch (activity) {
        case 0:  // walking
            p.speed = 1.0;
            p.micro_amplitude = 0.03;
            p.micro_frequency = 1.8;
            break;
        case 1:  // stationary: breathing only
            p.micro_amplitude = 0.004;
            p.micro_frequency = 0.3;
            break;
        case 2:  // sitting down
        case 3:  // standing up from sitting (time reversal of sitting down)
            p.transient = Transient::step;
            p.displacement = 0.30;
            p.onset = 0.2;
            p.duration = 0.5;
            p.reflectivity_change = -0.3;
            p.micro_amplitude = 0.01;
            p.micro_frequency = 1.0;
            p.time_reversed = activity == 3;
            break;
        case 4:  // bending from sitting
            p.transient = Transient::bump;
            p.displacement = 0.15;
            p.onset = 0.15;
            p.duration = 0.7;
            p.reflectivity_change = -0.2;
            p.micro_amplitude = 0.005;
            p.micro_frequency = 0.5;
            break;
        case 5:  // bending from standing
            p.transient = Transient::bump;
            p.displacement = 0.35;
            p.onset = 0.1;
            p.duration = 0.8;
            p.reflectivity_change = -0.35;
            p.micro_amplitude = 0.005;
            p.micro_frequency = 0.5;
            break;
        case 6:  // falling while walking
            p.speed = 0.8;
            p.walk_until = 0.45;
            p.transient = Transient::step;
            p.displacement = 0.6;
            p.onset = 0.45;
            p.duration = 0.15;
            p.reflectivity_change = -0.5;
            p.micro_amplitude = 0.02;
            p.micro_frequency = 1.8;
            break;
        case 7:  // standing up from the ground (time reversal of a standing fall)
        case 8:  // falling while standing
            p.transient = Transient::step;
            p.displacement = 0.8;
            p.onset = 0.4;
            p.duration = 0.15;
            p.reflectivity_change = -0.5;
            p.micro_amplitude = 0.005;
            p.micro_frequency = 0.5;
            p.time_reversed = activity == 7;
            break;
        default:
            fail(ErrorKind::label, "activity_template: activity " + std::to_string(activity) + " outside [0,9)");
    }
    return p;
}

std::array<std::size_t, kActivityClasses> class_counts(std::size_t samples_per_class, bool imbalanced) {
    std::array<std::size_t, kActivityClasses> counts{};
    if (samples_per_class < 1) fail(ErrorKind::config, "synthesis: at least one sample per class is required");
    if (!imbalanced) {
        counts.fill(samples_per_class);
        return counts;
    }
    // The published shares sum to 99.2 %, so walking takes its share of the
    // total directly and the remaining classes split the rest by largest remainder.
    const std::size_t total = samples_per_class * kActivityClasses;
    counts[0] = static_cast<std::size_t>(std::lround(static_cast<double>(total) * kReferenceClassShare[0] / 100.0));
    const std::size_t rest = total - counts[0];
    const double share_sum = std::accumulate(kReferenceClassShare.begin() + 1, kReferenceClassShare.end(), 0.0);
    std::array<double, kActivityClasses> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 1; c < kActivityClasses; ++c) {
        const double exact = static_cast<double>(rest) * kReferenceClassShare[c] / share_sum;
        counts[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - std::floor(exact);
        assigned += counts[c];
    }
    std::array<std::size_t, kActivityClasses - 1> order{};
    std::iota(order.begin(), order.end(), 1);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < rest; ++i, ++assigned) ++counts[order[i % order.size()]];
    for (auto& c : counts) c = std::max<std::size_t>(c, 1);
    return counts;
}

namespace {

struct ParticipantTraits {
    std::array<double, kActivityClasses> amplitude{};
    std::array<double, kActivityClasses> timing{};
    double body = 1.0;
};

ParticipantTraits participant_traits(std::uint64_t seed, std::size_t participant) {
    std::mt19937_64 rng(mix_seed(seed, 0x70617274ULL, participant));
    std::uniform_real_distribution<double> amp(0.8, 1.2), tim(0.9, 1.1);
    ParticipantTraits t;
    for (std::size_t c = 0; c < kActivityClasses; ++c) {
        t.amplitude[c] = amp(rng);
        t.timing[c] = tim(rng);
    }
    t.body = amp(rng);
    return t;
}

bool profile_fits(const SynthesisConfig& cfg, const MotionProfile& p, std::size_t pulses) {
    const double max_range = cfg.radar.max_range();
    for (std::size_t m = 0; m < pulses; ++m) {
        const double t = static_cast<double>(m) * cfg.radar.pri;
        double nearest = INFINITY;
        std::size_t nearest_node = 0;
        for (std::size_t j = 0; j < cfg.radar.nodes.size(); ++j) {
            const double r = p.range(cfg.radar.nodes[j], t);
            if (r < 0.5 || r > 0.9 * max_range) return false;
            if (r < nearest) {
                nearest = r;
                nearest_node = j;
            }
        }
        if (cfg.scenario == Scenario::geometry && nearest_node != 0) return false;
    }
    return true;
}

MotionProfile sample_profile(const SynthesisConfig& cfg, int activity, const ParticipantTraits& traits,
                             std::mt19937_64& rng) {
    MotionProfile p = activity_template(activity);
    const double amp = traits.amplitude[static_cast<std::size_t>(activity)];
    const double tim = traits.timing[static_cast<std::size_t>(activity)];
    p.speed *= amp;
    p.displacement *= amp;
    p.micro_amplitude *= amp;
    p.duration = std::min(p.duration * tim, 1.0);
    p.span = static_cast<double>(cfg.window) * cfg.radar.pri;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double area = cfg.scenario == Scenario::geometry ? 0.25 : 1.0;
    const double onset = p.onset;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double rad = area * std::sqrt(unit(rng));
        const double ang = 2.0 * kPi * unit(rng);
        p.start = {rad * std::cos(ang), rad * std::sin(ang)};
        p.heading = 2.0 * kPi * unit(rng);
        p.micro_phase = 2.0 * kPi * unit(rng);
        p.onset = std::clamp(onset * tim + 0.1 * (unit(rng) - 0.5), 0.0, 1.0 - p.duration);
        p.reflectivity = traits.body * (0.9 + 0.2 * unit(rng));
        if (profile_fits(cfg, p, cfg.window)) return p;
    }
    fail(ErrorKind::range, "synthesis: could not place activity " + std::to_string(activity) +
                               " inside the unambiguous range of every node");
}

}  // namespace

Recording synthesize_recording(const SynthesisConfig& cfg) {
    cfg.radar.validate();
    if (cfg.window < 1) fail(ErrorKind::config, "synthesis: window length must be at least 1");
    if (cfg.participants < 1) fail(ErrorKind::config, "synthesis: at least one participant is required");
    const auto counts = class_counts(cfg.samples_per_class, cfg.imbalanced);
    const std::size_t per_participant = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    const std::size_t total = per_participant * cfg.participants;
    const std::size_t nodes = cfg.radar.nodes.size();

    Recording rec;
    rec.fast_bins = cfg.radar.fast_bins;
    rec.pulses = total * cfg.window;
    rec.participants = cfg.participants;
    rec.frames.resize(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
        rec.frames[j].node = j;
        rec.frames[j].fast_bins = rec.fast_bins;
        rec.frames[j].pulses = rec.pulses;
        rec.frames[j].samples.assign(rec.fast_bins * rec.pulses, {0.0f, 0.0f});
    }

    std::size_t k = 0;
    for (std::size_t part = 0; part < cfg.participants; ++part) {
        const auto traits = participant_traits(cfg.seed, part);
        for (std::size_t c = 0; c < kActivityClasses; ++c) {
            for (std::size_t i = 0; i < counts[c]; ++i, ++k) {
                std::mt19937_64 rng(mix_seed(cfg.seed, part + 1, c + 1, i + 1));
                const MotionProfile profile = sample_profile(cfg, static_cast<int>(c), traits, rng);
                const std::uint32_t start = static_cast<std::uint32_t>(k * cfg.window);
                for (std::size_t j = 0; j < nodes; ++j) {
                    const auto frame = generate_frame(cfg.radar, profile, j, cfg.window, mix_seed(cfg.seed, k + 1, j + 1, 0x6e6f6973ULL));
                    auto& dst = rec.frames[j].samples;
                    for (std::size_t n = 0; n < rec.fast_bins; ++n)
                        std::copy_n(frame.samples.begin() + static_cast<std::ptrdiff_t>(n * cfg.window), cfg.window,
                                    dst.begin() + static_cast<std::ptrdiff_t>(n * rec.pulses + start));
                }
                rec.labels.push_back({start, static_cast<std::uint32_t>(cfg.window), static_cast<std::uint32_t>(c),
                                      static_cast<std::uint32_t>(part)});
            }
        }
    }
    return rec;
}

std::vector<WindowSample> synthesize_dataset(const SynthesisConfig& cfg) { return windows(synthesize_recording(cfg)); }

// ---- windowing ------------------------------------------------------------------

WindowSample to_window(std::span<const ComplexFrame> frames, std::size_t start, std::size_t window, int label,
                       int participant) {
    if (frames.empty()) fail(ErrorKind::contract, "to_window: no frames");
    const std::size_t F = frames.front().fast_bins;
    const std::size_t M = frames.front().pulses;
    for (const auto& f : frames) {
        if (f.fast_bins != F || f.pulses != M) fail(ErrorKind::dimension, "to_window: frames disagree on extents");
    }
    if (window < 1 || start + window > M) {
        fail(ErrorKind::bounds, "to_window: window [" + std::to_string(start) + ", " + std::to_string(start + window) +
                                    ") exceeds frame of " + std::to_string(M) + " pulses");
    }
    WindowSample s;
    s.fast_bins = F;
    s.window = window;
    s.label = label;
    s.participant = participant;
    s.nodes.reserve(frames.size());
    for (const auto& f : frames) {
        std::vector<float> t(F * window * 2);
        for (std::size_t n = 0; n < F; ++n)
            for (std::size_t m = 0; m < window; ++m) {
                const std::complex<float> y = f.at(n, start + m);
                const double re = y.real(), im = y.imag();
                double ph = std::atan2(im, re);
                if (ph <= -kPi) ph = kPi;
                t[(n * window + m) * 2] = static_cast<float>(std::hypot(re, im));
                t[(n * window + m) * 2 + 1] = static_cast<float>(ph);
            }
        s.nodes.push_back(std::move(t));
    }
    return s;
}

std::vector<WindowSample> windows(const Recording& recording) {
    std::vector<WindowSample> out;
    out.reserve(recording.labels.size());
    for (const auto& l : recording.labels)
        out.push_back(to_window(recording.frames, l.start, l.length, static_cast<int>(l.activity),
                                static_cast<int>(l.participant)));
    return out;
}

WindowSample augment(const WindowSample& sample, double scale, std::uint64_t seed) {
    if (!(scale >= 0.0)) fail(ErrorKind::contract, "augment: scale must be non-negative");
    WindowSample out = sample;
    if (scale == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& node : out.nodes) {
        const std::size_t count = node.size() / 2;
        for (std::size_t ch = 0; ch < 2; ++ch) {
            double mean = 0.0, sq = 0.0;
            for (std::size_t i = 0; i < count; ++i) mean += node[i * 2 + ch];
            mean /= static_cast<double>(count);
            for (std::size_t i = 0; i < count; ++i) {
                const double d = node[i * 2 + ch] - mean;
                sq += d * d;
            }
            const double sigma = scale * std::sqrt(sq / static_cast<double>(count));
            for (std::size_t i = 0; i < count; ++i) {
                double v = node[i * 2 + ch] + sigma * gauss(rng);
                if (ch == 1) v = wrap_phase(v);
                node[i * 2 + ch] = static_cast<float>(v);
            }
        }
    }
    return out;
}

// ---- splits ---------------------------------------------------------------------

DatasetSplit split_for_participant(std::span<const WindowSample> samples, int participant, std::uint64_t seed) {
    DatasetSplit split;
    split.held_out_participant = participant;
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].participant == participant)
            split.test.push_back(i);
        else
            by_class[samples[i].label].push_back(i);
    }
    if (split.test.empty()) {
        fail(ErrorKind::split, "split: participant " + std::to_string(participant) + " has no samples");
    }
    for (auto& [label, idx] : by_class) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(participant) + 1, static_cast<std::uint64_t>(label) + 1));
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) / 5.0));
        split.validation.insert(split.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val));
        split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(val), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    return split;
}

std::vector<DatasetSplit> lopo_splits(std::span<const WindowSample> samples, std::uint64_t seed) {
    std::set<int> participants;
    for (const auto& s : samples) participants.insert(s.participant);
    if (participants.size() < 2) {
        fail(ErrorKind::split, "lopo: need at least two participants, found " + std::to_string(participants.size()));
    }
    std::vector<DatasetSplit> out;
    for (int p : participants) out.push_back(split_for_participant(samples, p, seed));
    return out;
}

}  // namespace radarfuse
