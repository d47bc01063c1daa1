"""
Plots of training curves and capture streams.
"""
import matplotlib.pyplot as plt
import numpy as np

from S2CLinkTools.core.frame_codec import FrameKind


def _new_axes(ax):
    if ax is None:
        fig, ax = plt.subplots()
    return ax.figure, ax


def plot_training_curves(report, path=None, title=None):
    """
    Training and validation accuracy and loss per epoch.

    Parameters
    ----------
    report : TrainReport
    path : str | None
        Save the figure here (PNG) when given.
    title : str | None

    Returns
    -------
    matplotlib Figure
    """
    curves = report.curves
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(10, 4))

    ax_acc.plot(curves['epoch'], curves['train_acc'], 'o-', label='training')
    ax_acc.plot(curves['epoch'], curves['val_acc'], 's--', label='validation')
    ax_acc.set_xlabel('epoch')
    ax_acc.set_ylabel('accuracy')
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend(loc='lower right')

    ax_loss.plot(curves['epoch'], curves['train_loss'], 'o-', label='training')
    ax_loss.plot(curves['epoch'], curves['val_loss'], 's--', label='validation')
    ax_loss.set_xlabel('epoch')
    ax_loss.set_ylabel('loss')
    ax_loss.legend(loc='upper right')

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, dpi=100)
    return fig


def plot_capture_timeline(captures, kept=None, path=None, ax=None):
    """
    Transmitted frame index seen by every capture, against capture time.

    Flat steps are duplicated captures; missing indices are skipped frames.
    Overhead frames are marked in red, kept frames (after dedup) circled.

    Parameters
    ----------
    captures : list of CapturedFrame
    kept : list of CapturedFrame | None
    path : str | None
    ax : matplotlib Axes | None

    Returns
    -------
    matplotlib Figure
    """
    fig, ax = _new_axes(ax)
    t = np.array([c.capture_time for c in captures])
    tx = np.array([c.tx_index_truth for c in captures])
    overhead = np.array([c.kind_truth is FrameKind.OVERHEAD for c in captures], dtype=bool)

    ax.step(t, tx, where='post', color='gray', lw=1)
    if overhead.any():
        ax.plot(t[overhead], tx[overhead], 'r.', ms=3, label='overhead')
    if kept:
        ax.plot([c.capture_time for c in kept], [c.tx_index_truth for c in kept], 'o',
                mfc='none', mec='k', label='kept')
    ax.set_xlabel('capture time (s)')
    ax.set_ylabel('Tx frame index')
    if overhead.any() or kept:
        ax.legend(loc='upper left')
    if path is not None:
        fig.savefig(path, dpi=100)
    return fig
