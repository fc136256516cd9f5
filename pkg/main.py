"""
Ponto de entrada do projeto.

Sem argumentos, mostra o menu interativo de processos. Com argumentos,
executa o subcomando pedido:

    python3 main.py synth-data --out datasets/synthetic --seed 0
    python3 main.py train --data datasets/synthetic --out runs/popup
    python3 main.py infer --checkpoint runs/popup/checkpoint.npz --cloud frame.ply --class ball
    python3 main.py infer --checkpoint runs/popup/checkpoint.npz --sequence frames/ --sigma 3
    python3 main.py eval --checkpoint runs/popup/checkpoint.npz --data datasets/synthetic --mode given-class --baseline nn
    python3 main.py saliency --checkpoint runs/popup/checkpoint.npz --cloud frame.ply --class ball --gt pose.json
    python3 main.py baseline --data datasets/synthetic --query frame.npy
    python3 main.py --dump-config

Códigos de saída: 0 sucesso, 1 uso/configuração, 2 erro de dados,
3 falha numérica.
"""

import argparse
import logging
import os
import subprocess
import sys

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from process.baseline import BaselineProcessor
from process.evaluate import EvaluateProcessor
from process.infer import InferProcessor
from process.saliency import SaliencyProcessor
from process.synth_data import SyntheticDataProcessor
from process.train import TrainProcessor
from tools.config import PopupConfig, dump_config, load_config
from tools.errors import PopupError
from tools.logs import configure_logging

console = Console()
logger = logging.getLogger("main")

instructions = """[bold yellow]Bem-vindo ao Object Pop-up![/bold yellow]

[green]Fluxo sugerido:[/green]
1. [cyan]Ajuste as chaves MODEL__*, TRAIN__*, DATA__* no .env (veja .env.example)[/cyan]
2. [cyan]Gere o dataset sintético[/cyan]
3. [cyan]Treine a rede[/cyan]
4. [cyan]Avalie contra o baseline de vizinho mais próximo[/cyan]
5. [cyan]Rode inferência ou saliência em quadros avulsos[/cyan]
"""

options = {
    "1": (
        "[bold cyan]🧪 Gerar[/bold cyan] dataset sintético",
        "python3 main.py synth-data --out datasets/synthetic",
    ),
    "2": (
        "[bold cyan]🏋️ Treinar[/bold cyan] a rede de pop-up",
        "python3 main.py train --data datasets/synthetic --out runs/popup",
    ),
    "3": (
        "[bold magenta]📊 Avaliar[/bold magenta] com classe informada (com baseline NN)",
        "python3 main.py eval --checkpoint runs/popup/checkpoint.npz --data datasets/synthetic "
        "--mode given-class --baseline nn --out runs/popup/evaluation",
    ),
    "4": (
        "[bold magenta]📊 Avaliar[/bold magenta] com classe prevista",
        "python3 main.py eval --checkpoint runs/popup/checkpoint.npz --data datasets/synthetic "
        "--mode predicted-class --out runs/popup/evaluation",
    ),
    "5": (
        "[bold green]⚙️ Mostrar[/bold green] configuração efetiva",
        "python3 main.py --dump-config",
    ),
    "0": (
        "[bold red]❌ Sair[/bold red]",
        None,
    ),
}


def print_menu():
    table = Table(
        title="📊 Processos do Object Pop-up",
        box=box.ROUNDED,
        show_lines=True,
        title_style="bold green",
    )
    table.add_column("Opção", style="cyan bold", width=6, justify="center")
    table.add_column("Descrição", style="white", no_wrap=False)
    table.add_column("Subcomando", style="dim", no_wrap=False)

    for key, (desc, command) in options.items():
        subcommand = command.removeprefix("python3 main.py ") if command else ""
        table.add_row(f"[bold]{key}[/bold]", desc, subcommand)

    console.print(table)


def menu():
    console.print(
        Panel(
            instructions,
            title="⚙️ Instruções",
            title_align="left",
            border_style="bright_yellow",
        )
    )

    while True:
        print_menu()
        choice = console.input(
            "\n[bold cyan]Digite o número da opção[/bold cyan]: "
        ).strip()

        if choice not in options:
            console.print("[bold red]❌ Opção inválida. Tente novamente.[/bold red]")
            continue

        if choice == "0":
            console.print("[bold green]✅ Encerrado com sucesso.[/bold green]")
            break

        _, command = options[choice]
        console.print(
            f"\n[bold green]▶️ Executando:[/bold green] [yellow]{command}[/yellow]\n"
        )
        try:
            subprocess.run(command, shell=True, check=True)
        except subprocess.CalledProcessError as e:
            console.print(f"[red]❌ Erro ao executar o comando:[/red] {e}")


# ============================================================
# Subcomandos
# ============================================================


def run_synth_data(args, config: PopupConfig):
    SyntheticDataProcessor(config, args.out, args.seed).processar()


def run_train(args, config: PopupConfig):
    TrainProcessor(config, args.data, args.out).processar()


def run_infer(args, config: PopupConfig):
    InferProcessor(
        config,
        args.checkpoint,
        args.out,
        cloud=args.cloud,
        sequence=args.sequence,
        class_name=args.class_name,
        sigma=args.sigma,
        fps=args.fps,
    ).processar()


def run_eval(args, config: PopupConfig):
    EvaluateProcessor(
        config,
        args.data,
        args.out,
        mode=args.mode,
        checkpoint=args.checkpoint,
        split=args.split,
        baseline=args.baseline,
    ).processar()


def run_saliency(args, config: PopupConfig):
    SaliencyProcessor(
        config, args.checkpoint, args.cloud, args.class_name, args.gt, args.out, args.frame
    ).processar()


def run_baseline(args, config: PopupConfig):
    BaselineProcessor(config, args.data, args.query, args.out, args.class_name).processar()


class PopupArgumentParser(argparse.ArgumentParser):
    """Erros de uso saem com código 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: erro: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="arquivo .env de configuração")

    parser = PopupArgumentParser(prog="main.py", description="Object pop-up a partir de nuvens de pontos humanas")
    parser.add_argument("--config", default=None, help="arquivo .env de configuração")
    parser.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING ou ERROR")
    parser.add_argument("--dump-config", action="store_true", help="imprime a configuração efetiva e sai")
    sub = parser.add_subparsers(dest="command", parser_class=PopupArgumentParser)

    p = sub.add_parser("synth-data", parents=[common], help="gera o dataset sintético")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="datasets/synthetic")
    p.set_defaults(handler=run_synth_data)

    p = sub.add_parser("train", parents=[common], help="treina a rede")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="runs/popup")
    p.set_defaults(handler=run_train)

    p = sub.add_parser("infer", parents=[common], help="pop-up em um quadro ou sequência")
    p.add_argument("--checkpoint", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--cloud")
    source.add_argument("--sequence", help="arquivo .npy (quadros, N, 3) ou diretório com um arquivo por quadro")
    p.add_argument("--class", dest="class_name", default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--out", default="runs/popup/inference")
    p.set_defaults(handler=run_infer)

    p = sub.add_parser("eval", parents=[common], help="avalia checkpoint e/ou baseline")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["given-class", "predicted-class"], default="given-class")
    p.add_argument("--baseline", choices=["nn"], default=None)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--out", default="runs/popup/evaluation")
    p.set_defaults(handler=run_eval)

    p = sub.add_parser("saliency", parents=[common], help="saliência iterativa por gradiente")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--frame", type=int, default=None)
    p.add_argument("--out", default="runs/popup/saliency")
    p.set_defaults(handler=run_saliency)

    p = sub.add_parser("baseline", parents=[common], help="consulta o baseline de vizinho mais próximo")
    p.add_argument("--data", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--class", dest="class_name", default=None)
    p.add_argument("--out", default="runs/baseline")
    p.set_defaults(handler=run_baseline)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config_path = args.config
        if config_path is None and os.path.exists(".env"):
            config_path = ".env"
        config = load_config(config_path)
        if args.dump_config:
            sys.stdout.write(dump_config(config))
            return 0
        if args.command is None:
            build_parser().print_help()
            return 1
        args.handler(args, config)
    except PopupError as e:
        logger.error("❌ %s", e)
        return e.exit_code
    return 0


if __name__ == "__main__":
    if len(sys.argv) == 1:
        menu()
    else:
        sys.exit(main())
