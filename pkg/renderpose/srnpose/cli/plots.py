import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot_curves(curves: dict[str, pd.DataFrame], path) -> None:
    """
    Rotation and translation error against refinement step, mean with a one-std band,
    one line per run label. Written as SVG; the curve CSVs stay the source of truth.
    """
    fig, (ax_rot, ax_tra) = plt.subplots(1, 2, figsize=(10, 4))
    for label, frame in curves.items():
        if frame.empty:
            continue
        for ax, column in ((ax_rot, 'e_rot'), (ax_tra, 'e_tra')):
            mean, std = frame[f'{column}_mean'], frame[f'{column}_std']
            ax.plot(frame['step'], mean, label=label)
            ax.fill_between(frame['step'], mean - std, mean + std, alpha=0.2)
    ax_rot.set_xlabel('step')
    ax_rot.set_ylabel('rotation error (deg)')
    ax_tra.set_xlabel('step')
    ax_tra.set_ylabel('translation error')
    ax_rot.legend(fontsize='small')
    fig.tight_layout()
    fig.savefig(path, format='svg')
    plt.close(fig)
