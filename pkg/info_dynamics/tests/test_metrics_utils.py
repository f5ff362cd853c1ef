import pytest

from src.aux_utils import ConfigError, DataError
from src.estimators import EstimateResult, EstimatorConfig, Significance
from src.metrics_utils import (
    Edge,
    InfoGraph,
    WindowResult,
    average_ais,
    build_info_graph,
    market_averages,
    omega,
    system_multi_information,
    system_summary,
    total_apparent_te,
    total_collective_te,
    window_summary,
)

CFG = EstimatorConfig()


def res(value, p=None, by=None, measure="te"):
    sig = None if p is None else Significance(p, 99, 0.05, p <= 0.05, by)
    return EstimateResult(measure, value, CFG, 100, significance=sig)


def make_window(index=0, start=0, end=10, scale=1.0):
    return WindowResult(
        index=index,
        start_time=start,
        end_time=end,
        pair_te={
            ("A", "B", "returns"): res(0.2 * scale, p=0.01, by=True),
            ("B", "A", "returns"): res(0.1 * scale, p=0.01, by=False),
            ("A", "C", "returns"): res(0.3 * scale, p=0.5),
            ("C", "A", "returns"): res(0.05 * scale),
        },
        cross_te={
            ("A", "returns", "spread"): res(0.4 * scale, p=0.01, by=True),
            ("B", "spread", "returns"): res(0.6 * scale, p=0.2, by=False),
        },
        ais={
            ("A", "returns"): res(0.3 * scale, p=0.01, measure="ais"),
            ("B", "returns"): res(0.1 * scale, p=0.5, measure="ais"),
            ("C", "returns"): res(0.2 * scale, p=0.01, measure="ais"),
        },
        collective={
            ("A", "returns"): res(0.25 * scale, p=0.01, measure="collective_te"),
            ("B", "returns"): res(0.5 * scale, p=0.3, measure="collective_te"),
        },
        multi_info={"returns": res(0.15 * scale, p=0.01, measure="mi")},
        history={("A", "returns"): 2},
        delays={("A", "B", "returns"): 1},
    )


def test_totals_mask_non_significant_links():
    w = make_window()
    # A→B pasa BY; B→A no pasa BY; A→C no es significativa; C→A sin prueba cuenta completa
    assert total_apparent_te(w, "returns") == pytest.approx(0.25)
    assert total_apparent_te(w, "returns", use_by=False) == pytest.approx(0.35)
    assert total_collective_te(w, "returns") == pytest.approx(0.25)
    assert system_multi_information(w, "returns") == pytest.approx(0.15)
    assert system_multi_information(w, "spread") == 0.0
    assert average_ais(w, "returns") == pytest.approx((0.3 + 0.0 + 0.2) / 3)
    with pytest.raises(DataError):
        average_ais(w, "spread")


def test_system_summary_rows():
    table = system_summary([make_window(0), make_window(1, 10, 20, scale=2.0)], ["returns"])
    assert list(table["window"]) == [0, 1]
    assert table["T_app_sys"].tolist() == pytest.approx([0.25, 0.5])
    assert {"T_coll_sys", "I_sys", "A_sys", "start_time", "observable"} <= set(table.columns)


def test_market_averages_split_regimes():
    windows = [make_window(0, 0, 10), make_window(1, 5, 15), make_window(2, 10, 20, scale=2.0)]
    table = market_averages(windows, split_time=10, observable="returns").set_index("market")
    assert list(table.index) == ["A", "B", "C"]
    # la ventana 1 cruza el corte y no entra en ningún régimen
    assert table.loc["A", "A_before"] == pytest.approx(0.3)
    assert table.loc["A", "A_after"] == pytest.approx(0.6)
    assert table.loc["A", "T_coll_after"] == pytest.approx(0.5)
    assert table.loc["C", "T_coll_before"] == 0.0
    with pytest.raises(DataError):
        market_averages(windows, split_time=100, observable="returns")


def test_info_graph_averages_over_windows():
    windows = [make_window(0), make_window(1, scale=3.0)]
    graph = build_info_graph(windows, ["A", "B", "C"], ["returns", "spread"])
    edges = {(e.src_market, e.dst_market, e.src_obs, e.dst_obs): e.value for e in graph.edges}
    assert edges[("A", "B", "returns", "returns")] == pytest.approx(0.4)
    assert edges[("C", "A", "returns", "returns")] == pytest.approx(0.1)
    assert edges[("A", "A", "returns", "spread")] == pytest.approx(0.8)
    assert ("B", "A", "returns", "returns") not in edges
    assert ("B", "B", "spread", "returns") not in edges
    assert list(graph.to_frame().columns) == ["src_market", "dst_market", "src_obs", "dst_obs", "te_nats"]


def test_omega_normalization():
    graph = InfoGraph(
        ("A", "B", "C"),
        ("returns", "spread"),
        (
            Edge("A", "B", "returns", "returns", 0.6),
            Edge("B", "C", "returns", "returns", 0.6),
            Edge("A", "A", "returns", "spread", 0.3),
            Edge("B", "B", "spread", "returns", 0.9),
        ),
    )
    weights = omega(graph)
    # N(N-1) = 6 pares de mercados; N(|obs|-1) = 3 enlaces entre observables
    assert weights["returns"]["omega_self"] == pytest.approx(0.2)
    assert weights["returns"]["omega_out"] == pytest.approx(0.1)
    assert weights["returns"]["omega_in"] == pytest.approx(0.3)
    assert weights["spread"] == pytest.approx({"omega_self": 0.0, "omega_in": 0.1, "omega_out": 0.3})


def test_omega_requires_two_markets():
    with pytest.raises(ConfigError):
        omega(InfoGraph(("A",), ("returns",)))


def test_info_graph_validation():
    with pytest.raises(DataError):
        InfoGraph(("A", "B"), ("returns",), (Edge("A", "A", "returns", "returns", 0.1),))
    with pytest.raises(DataError):
        InfoGraph(("A", "B"), ("returns", "spread"), (Edge("A", "B", "returns", "spread", 0.1),))


def test_window_summary_is_json_ready():
    summary = window_summary(make_window(), ["returns"])
    assert summary["totals"]["returns"]["T_app_sys"] == pytest.approx(0.25)
    assert summary["pair_te"]["A|B|returns"]["by_significant"] is True
    assert "p_value" not in summary["pair_te"]["C|A|returns"]
    assert summary["history"] == {"A|returns": 2}
    assert summary["delays"] == {"A|B|returns": 1}
    assert list(summary["multi_information"]) == ["returns"]
