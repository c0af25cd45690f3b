# Shifting query features in time, with and without matching
#
# A clip of decoder outputs has shape (T, N, D): T frames, N query slots,
# D channels. A temporal shift moves a slice of channels one frame forward
# and another slice one frame backward, so each frame sees a little of its
# neighbours.

import numpy as np

from tubematch import FeatureClip, ShiftSpec, TrackAlignment, match_clip, matched_shift, temporal_shift

# Three frames, one slot, three channels. Channel 0 goes forward, channel 1
# goes backward, channel 2 stays.
data = np.array([[[1.0, 10.0, 100.0]],
                 [[2.0, 20.0, 200.0]],
                 [[3.0, 30.0, 300.0]]])
clip = FeatureClip(data)
spec = ShiftSpec("1/3", "1/3", alignment="index_naive")
print(temporal_shift(clip, spec).data[:, 0])
# frame 0 has nothing to receive from the past, so that channel is zero-filled;
# likewise the last frame for the backward channel.

# Slot i at frame t is not necessarily the same object as slot i at frame t+1.
# Here two objects trade slots between frames.
a, b = np.eye(4)[0], np.eye(4)[1]
clip = FeatureClip(np.stack([np.stack([a, b]), np.stack([b, a])]))

# Matching finds the permutation that best aligns adjacent frames
# (cost is 1 - cosine similarity, solved exactly with the Hungarian method).
align = match_clip(clip)
print("pair map 0 -> 1:", align.pair_maps[0])

spec = ShiftSpec("1/4", "1/4", alignment="matched")
shifted = matched_shift(clip, spec, align)
print("matched shift, frame 1:\n", shifted.data[1])

# With the identity alignment the matched shift is exactly the naive one.
same = matched_shift(clip, spec, TrackAlignment.identity(2, 2))
naive = temporal_shift(clip, spec.replace(alignment="index_naive"))
print("identity alignment == naive:", same == naive)
