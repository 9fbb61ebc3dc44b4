"""Playing-technique detection toolkit.

Synthesizes frame-labeled training audio from short single-technique clips,
trains a fully convolutional frame classifier on log-mel spectrograms, and
detects techniques in recordings of any length via overlapping-window
prediction averaging.
"""

__version__ = "0.1.0"

SAMPLE_RATE = 44100
FRAME_SECONDS = 0.05
FRAME_SAMPLES = 2205          # 0.05 s at 44.1 kHz; also the mel hop length
SEGMENT_SECONDS = 10.0
SEGMENT_SAMPLES = 441000
SEGMENT_FRAMES = 200
