"""Frozen 23-rater consensus fixture for the thirteen-clip label tests.

Each row pins how many of the 23 raters voted High on each dimension for
one clip, together with the expected majority outcome: the level code and
the winning percentage rounded to two decimals.  The expectations were
tallied by hand from the vote counts and are kept as literals on purpose;
the tests must reproduce them, never recompute them from the same code
under test.
"""

from emomsase.dataio import SamRating, Sex

N_RATERS = 23

# (clip, high arousal votes, high valence votes,
#  expected (arousal code, arousal %), expected (valence code, valence %))
CLIP_CONSENSUS = [
    ("clip01", 19, 6, ("HA", 82.61), ("LV", 73.91)),
    ("clip02", 19, 6, ("HA", 82.61), ("LV", 73.91)),
    ("clip03", 15, 2, ("HA", 65.22), ("LV", 91.30)),
    ("clip04", 15, 2, ("HA", 65.22), ("LV", 91.30)),
    ("clip05", 11, 20, ("LA", 52.17), ("HV", 86.96)),
    ("clip06", 11, 20, ("LA", 52.17), ("HV", 86.96)),
    ("clip07", 9, 23, ("LA", 60.87), ("HV", 100.0)),
    ("clip08", 9, 23, ("LA", 60.87), ("HV", 100.0)),
    ("clip09", 9, 20, ("LA", 60.87), ("HV", 86.96)),
    ("clip10", 11, 20, ("LA", 52.17), ("HV", 86.96)),
    ("clip11", 6, 10, ("LA", 73.91), ("LV", 56.52)),
    ("clip12", 13, 2, ("HA", 56.52), ("LV", 91.30)),
    ("clip13", 14, 11, ("HA", 60.87), ("LV", 52.17)),
]


def consensus_ratings():
    """Expand the vote counts into one SamRating per rater and clip.

    High votes score 6, Low votes score 2, so any boundary policy reads
    them the same way.  Rater sex alternates and plays no role here.
    """
    ratings = []
    for clip, n_high_aro, n_high_val, _, _ in CLIP_CONSENSUS:
        for r in range(N_RATERS):
            ratings.append(SamRating(
                participant_id=f"r{r + 1:02d}",
                video_id=clip,
                valence=6 if r < n_high_val else 2,
                arousal=6 if r < n_high_aro else 2,
                sex=Sex.MALE if r % 2 == 0 else Sex.FEMALE,
            ))
    return ratings
