import json
import socket
import subprocess
import sys
import time

import pytest
from click.testing import CliRunner

from helpers import MICROS
from ospx import analysis, protocol
from ospx.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def write_auction_file(path, bids, reserve_micros=0):
    path.write_text(json.dumps({
        "reserve_micros": reserve_micros,
        "bids": [
            {
                "network_id": nid,
                "mandatory_micros": mandatory,
                "optional_micros": optional,
                "creative_id": f"ad:{nid}",
            }
            for nid, mandatory, optional in bids
        ],
    }))


class TestAuctionCommand:
    def test_withheld_optional_example(self, runner, tmp_path):
        path = tmp_path / "auction.json"
        write_auction_file(path, [("net1", 10 * MICROS, 0), ("net2", 5 * MICROS, 0)])
        result = runner.invoke(main, ["auction", str(path)])
        assert result.exit_code == 0
        assert "winner=net1 price=5.000000" in result.output

    def test_honest_optional_example(self, runner, tmp_path):
        path = tmp_path / "auction.json"
        write_auction_file(path, [("net1", 10 * MICROS, 8 * MICROS), ("net2", 5 * MICROS, 0)])
        result = runner.invoke(main, ["auction", str(path)])
        assert result.exit_code == 0
        assert "winner=net1 price=8.000000" in result.output
        assert "optional=8.000000" in result.output

    def test_empty_bid_list_exits_one(self, runner, tmp_path):
        path = tmp_path / "auction.json"
        write_auction_file(path, [])
        result = runner.invoke(main, ["auction", str(path)])
        assert result.exit_code == 1
        assert "unfilled" in result.output

    def test_optional_above_mandatory_exits_two_naming_the_network(self, runner, tmp_path):
        path = tmp_path / "auction.json"
        write_auction_file(path, [("netbad", 5 * MICROS, 6 * MICROS)])
        result = runner.invoke(main, ["auction", str(path)])
        assert result.exit_code == 2
        assert "netbad" in result.output

    def test_unparseable_file_exits_two(self, runner, tmp_path):
        path = tmp_path / "auction.json"
        path.write_text("{broken")
        result = runner.invoke(main, ["auction", str(path)])
        assert result.exit_code == 2


class TestSimulateCommand:
    def test_fixed_bids_prints_closed_form_and_exact(self, runner):
        result = runner.invoke(
            main, ["simulate", "--bids", "10,8,5", "--k", "2", "--liars", "2",
                   "--trials", "20000"]
        )
        assert result.exit_code == 0
        assert "closed form" in result.output and "2.750000" in result.output
        assert "exact enumeration" in result.output

    def test_no_liars_no_loss(self, runner):
        result = runner.invoke(
            main, ["simulate", "--bids", "10,8,5", "--k", "2", "--trials", "5000"]
        )
        assert result.exit_code == 0
        mean_line = next(l for l in result.output.splitlines() if l.startswith("mean loss"))
        assert mean_line.split()[-1] == "0.000000"

    def test_uniform_two_bidders(self, runner):
        result = runner.invoke(
            main, ["simulate", "--bids", "uniform", "--n", "2", "--k", "2",
                   "--liars", "2", "--trials", "50000"]
        )
        assert result.exit_code == 0
        assert "0.166667" in result.output  # the exact closed form
        mean_line = next(l for l in result.output.splitlines() if l.startswith("mean loss"))
        assert abs(float(mean_line.split()[-1]) - 1 / 6) < 0.01

    def test_output_is_byte_identical_across_runs(self, runner):
        args = ["simulate", "--bids", "uniform", "--n", "3", "--k", "2",
                "--liars", "1", "--trials", "30000"]
        assert runner.invoke(main, args).output == runner.invoke(main, args).output

    def test_csv_reparses_to_the_same_report(self, runner, tmp_path):
        csv_path = tmp_path / "out.csv"
        result = runner.invoke(
            main, ["simulate", "--bids", "10,8,5", "--k", "2", "--liars", "2",
                   "--trials", "20000", "--seed", "55", "--csv", str(csv_path)]
        )
        assert result.exit_code == 0
        [(config, report)] = analysis.read_reports_csv(csv_path)
        assert config.seed == 55
        assert report == analysis.simulate_losses(config)

    def test_bids_file(self, runner, tmp_path):
        bids_path = tmp_path / "bids.txt"
        bids_path.write_text("10\n8\n5\n")
        result = runner.invoke(
            main, ["simulate", "--bids", str(bids_path), "--k", "2", "--liars", "2",
                   "--trials", "5000"]
        )
        assert result.exit_code == 0
        assert "2.750000" in result.output

    def test_flag_validation(self, runner):
        assert runner.invoke(main, ["simulate", "--bids", "10,8", "--k", "1"]).exit_code == 2
        assert runner.invoke(main, ["simulate", "--bids", "uniform", "--k", "2"]).exit_code == 2
        assert runner.invoke(
            main, ["simulate", "--bids", "10,8", "--n", "3", "--k", "2"]
        ).exit_code == 2
        assert runner.invoke(
            main, ["simulate", "--bids", "10,8", "--k", "2", "--seed", "nope"]
        ).exit_code == 2

    def test_random_seed_opt_out(self, runner):
        args = ["simulate", "--bids", "uniform", "--n", "2", "--k", "2",
                "--liars", "2", "--trials", "2000", "--seed", "random"]
        assert runner.invoke(main, args).exit_code == 0


def _spawn(args):
    return subprocess.Popen(
        [sys.executable, "-u", "-m", "ospx.cli", *args],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )


def _read_port(process, tag):
    deadline = time.time() + 10
    while time.time() < deadline:
        line = process.stdout.readline()
        if tag in line:
            return int(line.rsplit(":", 1)[1])
    raise AssertionError(f"never saw {tag!r} from {process.args}")


@pytest.mark.parametrize("latency_flag", [0, 500])
def test_serve_and_mock_network_end_to_end(tmp_path, latency_flag):
    """Spawn two mock bidders and the exchange as real processes."""
    book1 = tmp_path / "book1.json"
    book1.write_text(json.dumps({
        "network_id": "net1",
        "advertisers": [
            {"advertiser_id": "a", "bid_micros": 10 * MICROS},
            {"advertiser_id": "b", "bid_micros": 8 * MICROS},
        ],
    }))
    book2 = tmp_path / "book2.json"
    book2.write_text(json.dumps({
        "network_id": "net2",
        "advertisers": [{"advertiser_id": "c", "bid_micros": 5 * MICROS}],
    }))

    processes = []
    try:
        mock1 = _spawn(["mock-network", "--book", str(book1), "--policy", "honest"])
        mock2 = _spawn(["mock-network", "--book", str(book2), "--policy", "honest",
                        "--latency-ms", str(latency_flag)])
        processes += [mock1, mock2]
        port1 = _read_port(mock1, "net1 listening on")
        port2 = _read_port(mock2, "net2 listening on")

        config_path = tmp_path / "exchange.json"
        config_path.write_text(json.dumps({
            "listen": "127.0.0.1:0",
            "deadline_ms": 100,
            "log_path": str(tmp_path / "log.jsonl"),
            "networks": [
                {"network_id": "net1", "address": f"127.0.0.1:{port1}"},
                {"network_id": "net2", "address": f"127.0.0.1:{port2}"},
            ],
        }))
        server = _spawn(["serve", str(config_path)])
        processes.append(server)
        exchange_port = _read_port(server, "exchange listening on")

        with socket.create_connection(("127.0.0.1", exchange_port), timeout=10) as sock:
            sock.sendall(protocol.encode_message(
                protocol.make_ad_request("r1", "page", "user", 0)
            ))
            response = json.loads(sock.makefile("rb").readline())
        assert response["filled"] is True
        assert response["creative_id"] == "ad:a"

        win_line = mock1.stdout.readline()  # the win notice echoed by the winner
        assert json.loads(win_line)["clearing_price_micros"] == 8 * MICROS

        records = [json.loads(l) for l in (tmp_path / "log.jsonl").read_text().splitlines()]
        assert records[0]["outcome"]["clearing_price_micros"] == 8 * MICROS
        expected_net2 = "timed_out" if latency_flag else "bid"
        assert records[0]["networks"]["net2"]["status"] == expected_net2
    finally:
        for process in processes:
            process.terminate()
        for process in processes:
            process.wait(timeout=10)
