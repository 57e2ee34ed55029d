#pragma once

#include <utility>
#include <vector>

#include "vdt/codec.hpp"
#include "vdt/dit.hpp"
#include "vdt/rng.hpp"

namespace vdt {

/// The conditioning four-tuple {x_a, d_p, m_c, c}: agnostic frames, pose
/// maps, inpaint masks and the garment image.
struct ConditioningTuple {
    Tensor x_a;  // [f,H,W,3]
    Tensor d_p;  // [f,H,W,3]
    Tensor m_c;  // [f,H,W,1], values in {0,1}
    Tensor c;    // [1,H,W,3]
    void validate() const;
    int64_t frames() const { return x_a.dim(0); }
};

/// Procedural "dancing figure" scene: ellipse body + textured garment
/// rectangle on a sinusoidal path with rotation; flat color-coded pose map;
/// parsing mask = garment region. Fully deterministic given the spec.
struct SyntheticSceneSpec {
    uint64_t seed = 0;
    int64_t total_frames = 48;
    int64_t height = 64, width = 64;
    // path: center +- amplitude * sin(2*pi*freq*u + phase), u = frame/total
    double amp_x = 0.16, amp_y = 0.05;
    double freq = 1.0, phase = 0.0;
    double rot_amp = 0.12;  // radians
    // geometry as fractions of the canvas
    double body_rx = 0.16, body_ry = 0.28;
    double garment_w = 0.26, garment_h = 0.24;
    int texture_id = 0;     // 0 stripes, 1 checker, 2 letter glyph
    int background_id = 0;  // 0 flat, 1 gradient, 2 checker
};

/// Seeded random variation of the scene parameters (texture, background,
/// path, geometry) at a fixed canvas size.
SyntheticSceneSpec make_random_scene_spec(uint64_t seed, int64_t height, int64_t width,
                                          int64_t total_frames);

struct SceneRender {
    VideoTensor video;
    Tensor parsing;     // [F,H,W,1] garment region
    Tensor pose;        // [F,H,W,3] flat color-coded parts
    Tensor silhouette;  // [F,H,W,1] full figure
};

SceneRender render_scene(const SyntheticSceneSpec& spec);

/// Analytic figure-center path (pixel coordinates of the torso center).
std::pair<double, double> scene_path(const SyntheticSceneSpec& spec, int64_t frame);
double scene_rotation(const SyntheticSceneSpec& spec, int64_t frame);

/// x_a = frame with the masked region set to neutral gray; m_c = mask dilated
/// by a 3-px Euclidean disk.
void derive_agnostic(const Tensor& frame, const Tensor& garment_mask, Tensor& x_a_out,
                     Tensor& m_c_out);

/// Garment image: garment pixels of the given frame on a gray canvas.
Tensor garment_crop(const SceneRender& scene, int64_t frame);

struct ClipSample {
    VideoTensor frames;
    ConditioningTuple cond;
    int64_t stride = 1;
    int64_t start = 0;
    std::vector<int64_t> indices;
};

/// stride ~ U{stride_range}, start uniform over feasible starts, frames at
/// {start, start+stride, ...}; garment crop drawn from one of the clip's
/// frames.
ClipSample sample_stride_clip(const SceneRender& scene, int64_t f,
                              std::pair<int64_t, int64_t> stride_range, Rng& rng);

struct SwapResult {
    ConditioningTuple control_side;   // swapped copy (ControlNet input)
    std::vector<int64_t> swapped;     // exactly k distinct frame indices
};

/// Random agnostic-condition swap: at k frames, x_a := ground-truth frame and
/// m_c := 0, on the ControlNet copy only. The caller keeps the original tuple
/// for the denoiser targets.
SwapResult random_swap(const ConditioningTuple& cond, const VideoTensor& ground_truth, int64_t k,
                       Rng& rng, bool contiguous = false);

/// Rotation in +-15 degrees, isotropic scale in [0.8,1.2], reflected padding,
/// bilinear resampling; canvas size preserved.
Tensor augment_garment(const Tensor& c, Rng& rng);

/// Encodes {x_a, d_p} and concatenates the nearest-neighbour-resized mask:
/// [f,h,w,9] with channel layout [z_a | z_p | m_c].
ControlInput build_control_input(const ConditioningTuple& cond, const Codec& codec);

/// Nearest-neighbour mask resize [f,H,W,1] -> [f,H/8,W/8,1].
Tensor resize_mask_nearest(const Tensor& m, int64_t factor);

}  // namespace vdt
