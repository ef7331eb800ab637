from matplotlib.figure import Figure

from sosim.scenario import SupplyCurve
from sosim.vis import plot_supply_curves


def test_one_trace_per_curve(tmp_path):
    curves = [
        SupplyCurve(((5.0, 1.0), (10.0, 2.0)), name="base"),
        SupplyCurve(((5.0, 1.5),), name="scenario-1"),
        SupplyCurve((), name="nothing served"),
    ]
    fig = plot_supply_curves(curves, demand_curve=[(8.0, 1.5), (4.0, 3.0)], title="block")
    assert isinstance(fig, Figure)
    ax = fig.axes[0]
    assert len(ax.lines) == 3
    assert [t.get_text() for t in ax.get_legend().get_texts()] == ["base", "scenario-1", "willingness to pay"]
    assert list(ax.lines[0].get_xdata()) == [0.0, 5.0, 10.0]
    path = tmp_path / "curves.png"
    fig.savefig(path)
    assert path.stat().st_size > 0


def test_unnamed_curves_have_no_legend():
    fig = plot_supply_curves([SupplyCurve(((1.0, 1.0),))])
    assert fig.axes[0].get_legend() is None
