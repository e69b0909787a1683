#pragma once

// Synthetic distributed UWB radar data: echo generation from parametric
// target motion, slow-time windowing into polar tensors, augmentation and
// leave-one-participant-out splitting.

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace radarfuse {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr std::size_t kActivityClasses = 9;

// Class shares of the reference recording campaign, in percent, indexed by
// activity id: walking, stationary, sitting down, standing up from sitting,
// bending from sitting, bending from standing, falling while walking,
// standing up from the ground, falling while standing.
inline constexpr std::array<double, kActivityClasses> kReferenceClassShare = {
    29.7, 14.8, 5.1, 4.7, 11.8, 12.9, 3.3, 11.6, 5.3};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

enum class NoiseReference {
    frame_peak,  // noise power relative to the peak noiseless echo of the frame
    absolute     // noise power relative to RadarConfig::reference_amplitude
};

struct RadarConfig {
    double carrier_angular_frequency = 2.0 * kPi * 7.29e9;  // rad/s
    double pri = 0.05;                                      // T, s
    double fast_time_period = 0.0;                          // T_s, s
    double pulse_width = 0.0;                               // sigma_p of the Gaussian envelope, s
    std::size_t fast_bins = 480;                            // F
    std::vector<Point2> nodes;
    double noise_db = -30.0;
    NoiseReference noise_reference = NoiseReference::frame_peak;
    double reference_amplitude = 1.0;

    // F * T_s * c / 2
    double max_range() const;
    void validate() const;

    // Nodes on a circle of radius ring_radius around the origin, bins spread
    // evenly over [0, max_range).
    static RadarConfig ring(std::size_t fast_bins, std::size_t nodes, double ring_radius = 3.0,
                            double max_range = 7.2);
};

enum class Transient {
    none,
    step,  // smooth monotone displacement
    bump   // out and back
};

// Parametric single-scatterer motion. Time is normalized to the observation
// span: s = t / span in [0, 1]. A time-reversed profile evaluates s -> 1 - s.
struct MotionProfile {
    int activity = 0;
    Point2 start;
    double heading = 0.0;          // direction of body displacement, rad
    double speed = 0.0;            // translational speed, m/s
    double walk_until = 1.0;       // normalized time at which translation stops
    Transient transient = Transient::none;
    double displacement = 0.0;     // transient amplitude, m
    double onset = 0.0;            // normalized transient start
    double duration = 1.0;         // normalized transient length
    bool time_reversed = false;
    double micro_amplitude = 0.0;  // line-of-sight micro-motion, m
    double micro_frequency = 0.0;  // Hz
    double micro_phase = 0.0;      // rad
    double reflectivity = 1.0;     // alpha_0
    double reflectivity_change = 0.0;  // fractional change of alpha_0 across the transient
    double span = 1.5;             // seconds covered by s in [0, 1]

    Point2 position(double t) const;
    // Range from a monostatic node at `node` including micro-motion, m.
    double range(Point2 node, double t) const;
    // alpha(t) = reflectivity(t) / r^2
    double attenuation(double t, double range) const;
};

// Echo matrix of one node, fast time x slow time, row-major (n * pulses + m).
struct ComplexFrame {
    std::size_t node = 0;
    std::size_t fast_bins = 0;
    std::size_t pulses = 0;
    std::vector<std::complex<float>> samples;

    std::complex<float> at(std::size_t n, std::size_t m) const { return samples[n * pulses + m]; }
};

// One training example: per node an F x W x 2 tensor (magnitude, phase),
// stored row-major as [fast][slow][channel].
struct WindowSample {
    std::size_t fast_bins = 0;
    std::size_t window = 0;
    std::vector<std::vector<float>> nodes;
    int label = 0;
    int participant = 0;

    std::size_t node_count() const { return nodes.size(); }
    float magnitude(std::size_t node, std::size_t n, std::size_t m) const { return nodes[node][(n * window + m) * 2]; }
    float phase(std::size_t node, std::size_t n, std::size_t m) const { return nodes[node][(n * window + m) * 2 + 1]; }
};

struct WindowLabel {
    std::uint32_t start = 0;
    std::uint32_t length = 0;
    std::uint32_t activity = 0;
    std::uint32_t participant = 0;

    bool operator==(const WindowLabel&) const = default;
};

// Continuous per-node captures plus the table of labelled slow-time windows.
struct Recording {
    std::size_t fast_bins = 0;
    std::size_t pulses = 0;
    std::size_t participants = 0;
    std::vector<ComplexFrame> frames;  // ordered by node id
    std::vector<WindowLabel> labels;

    std::size_t node_count() const { return frames.size(); }
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    int held_out_participant = 0;
};

enum class Scenario {
    ring,     // target near the centre of a ring of equidistant nodes
    geometry  // target always closest to node 0, nodes progressively farther and noisier
};

struct SynthesisConfig {
    RadarConfig radar = RadarConfig::ring(480, 5);
    std::size_t window = 30;
    std::size_t participants = 5;
    std::size_t samples_per_class = 4;
    bool imbalanced = false;
    Scenario scenario = Scenario::ring;
    std::uint64_t seed = 42;

    // Radar layout for the geometry-controlled scenario.
    static RadarConfig geometry_radar(std::size_t fast_bins, std::size_t nodes);
};

// ---- operations ---------------------------------------------------------------

ComplexFrame generate_frame(const RadarConfig& cfg, const MotionProfile& profile, std::size_t node,
                            std::size_t pulses, std::uint64_t seed);

// Activity template for class `activity`, before participant and sample variation.
MotionProfile activity_template(int activity);

// Per-class sample counts for one participant.
std::array<std::size_t, kActivityClasses> class_counts(std::size_t samples_per_class, bool imbalanced);

Recording synthesize_recording(const SynthesisConfig& cfg);
std::vector<WindowSample> synthesize_dataset(const SynthesisConfig& cfg);

// Polar window of slow-time pulses [start, start + window) over every frame.
WindowSample to_window(std::span<const ComplexFrame> frames, std::size_t start, std::size_t window, int label = 0,
                       int participant = 0);
std::vector<WindowSample> windows(const Recording& recording);

// Adds N(0, (scale * channel_std)^2) to both channels of every node tensor and
// re-wraps phase into (-pi, pi]. The magnitude channel is not clamped.
WindowSample augment(const WindowSample& sample, double scale, std::uint64_t seed);

DatasetSplit split_for_participant(std::span<const WindowSample> samples, int participant, std::uint64_t seed);
std::vector<DatasetSplit> lopo_splits(std::span<const WindowSample> samples, std::uint64_t seed);

// Wraps any angle into (-pi, pi].
double wrap_phase(double angle);

}  // namespace radarfuse
