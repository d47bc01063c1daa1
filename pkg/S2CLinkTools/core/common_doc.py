from S2CLinkTools.core import docstring

###############################
# Programmable Documentation  #
###############################

_doc_dict = dict(
    _codec_cfg="""\
cfg : CodecConfig
    Frame geometry: pixels per side, cells per side, finder size and quiet zone.""",

    _frame_kind="""\
kind : FrameKind
    One of DATA_QR1 (d_f1), DATA_QR2 (d_f2), ASCII (a_f) or OVERHEAD (o_f).
    QR kinds carry three finder patterns inside a light quiet zone;
    the ASCII kind carries a dark border ring and no finders.""",

    _frame_image="""\
img : ndarray, shape (height, width)
    Grayscale intensities in [0, 1], 0 is black and 1 is white.""",

    _channel_params="""\
params : ChannelParams
    Distortion magnitudes (rotation, crop, blur, brightness, noise)
    and camera exposure settings.""",

    _link_cfg="""\
link : LinkConfig
    Transmit and camera frame rates and the overhead period.""",

    _seed="""\
seed : int
    Non-negative seed. Equal seeds give bit-identical results.""",

    _n_jobs="""\
n_jobs : int
    Number of worker threads. Results do not depend on this value.""",

    _manifest="""\
manifest : DatasetManifest
    Records (id, path, kind, seed, split) of a generated dataset.""",

    _experiment="""\
experiment : ExperimentSpec
    Binary label map of one of the experiments ex1, ex2 or ex3.""",

    _model="""\
model : FrameClassifier
    A classifier built from a ModelSpec.""",

    _captures="""\
captures : list of CapturedFrame
    Camera samples ordered by capture time.""",
)

doc_replacer = docstring.DocReplacer(allow_partial_formatting=True, **_doc_dict)
doc_replacer.replace()
