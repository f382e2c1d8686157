# -*- coding: utf-8 -*-
"""
命令行界面
子命令: train、infer、eval、gen-data、grad-check
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from ..controllers.evaluation_controller import EvaluationController
from ..controllers.training_controller import TrainingController
from ..exceptions import UsageError
from ..models.config import AppConfig, ConfigManager, known_config_keys
from ..services.dataset_service import RgbdDataset
from ..services.gradcheck_service import SUITE_MODULES, GradCheckSuite
from ..services.synthetic_service import SyntheticService
from ..utils.resource_utils import get_resource_path

logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    """用法错误时打印用法并抛出 UsageError(退出码 1)"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要整数: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"需要正整数: {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要整数: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"需要非负整数: {value}")
    return value


def build_parser() -> CliParser:
    """构建参数解析器"""
    config = AppConfig()
    parser = CliParser(
        prog="caai-net",
        description=f"{config.APP_NAME} {config.APP_VERSION} - RGB-D 显著性检测",
        epilog="配置文件可用的键: " + ", ".join(known_config_keys()),
    )
    parser.add_argument('--verbose', action='store_true', help="输出调试日志")
    parser.add_argument('--log-file', action='store_true', help="同时写入 ~/.caai_net/logs")
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    train = commands.add_parser('train', help="训练模型")
    train.add_argument('--config', help="key=value 配置文件(缺省为桌面规模默认值)")
    train.add_argument('--data', required=True, help="含 RGB/ depth/ GT/ 的训练集目录")
    train.add_argument('--out', required=True, help="检查点输出路径")
    train.add_argument('--resume', help="从该检查点续训")

    infer = commands.add_parser('infer', help="推理并写出 8 位 PNG 显著图")
    infer.add_argument('--ckpt', required=True, help="检查点路径")
    infer.add_argument('--data', required=True, help="含 RGB/ depth/ 的数据目录")
    infer.add_argument('--out', required=True, help="显著图输出目录")
    infer.add_argument('--batch-size', type=_positive_int, default=1, help="推理批大小")

    evaluate = commands.add_parser('eval', help="评估预测图")
    evaluate.add_argument('--pred', required=True, help="预测图目录")
    evaluate.add_argument('--gt', required=True, help="真值图目录")
    evaluate.add_argument('--csv', required=True, help="CSV 输出路径")

    gen = commands.add_parser('gen-data', help="生成合成 RGB-D 数据集")
    gen.add_argument('--spec', default=None, help="合成数据配置(缺省为内置 synthetic.cfg)")
    gen.add_argument('--n', type=_positive_int, required=True, help="样本数")
    gen.add_argument('--seed', type=_non_negative_int, default=0, help="随机种子")
    gen.add_argument('--out', required=True, help="输出目录")

    grad = commands.add_parser('grad-check', help="有限差分梯度检查")
    grad.add_argument('--seed', type=_non_negative_int, default=0, help="起始随机种子")
    grad.add_argument('--seeds', type=_positive_int, default=1, help="连续检查的种子个数")
    grad.add_argument('--modules', nargs='+', choices=SUITE_MODULES, default=list(SUITE_MODULES),
                      help="需要检查的模块")
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    config = ConfigManager().load_experiment(args.config)
    dataset = RgbdDataset(
        args.data, config.train.input_size, with_gt=True,
        depth_channels=config.backbone.depth_channels,
    )
    result = TrainingController(config).train(dataset, args.out, resume_from=args.resume)
    final = result.loss_history[-1] if result.loss_history else float('nan')
    print(f"{config.model.variant_name()}: {result.stats.epoch} 轮, 最终损失 {final:.6f}, 检查点 {args.out}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    controller = EvaluationController()
    model = controller.load_model(args.ckpt)
    written = controller.infer(model, args.data, args.out, batch_size=args.batch_size)
    print(f"已写出 {len(written)} 张显著图: {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    report = EvaluationController().evaluate_dataset(args.pred, args.gt)
    report.write_csv(args.csv)
    print(report.to_table())
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec_path = args.spec or get_resource_path("resources/synthetic.cfg")
    spec = ConfigManager().load_synthetic_spec(spec_path)
    result = SyntheticService(spec).generate(args.n, args.seed, args.out)
    print(f"已生成 {result.count} 个样本: {result.root}")
    return 0


def cmd_grad_check(args: argparse.Namespace) -> int:
    suite = GradCheckSuite()
    worst: Dict[str, float] = {name: 0.0 for name in args.modules}
    passed = True
    for seed in range(args.seed, args.seed + args.seeds):
        for name, result in suite.run(seed, args.modules).items():
            worst[name] = max(worst[name], result.max_rel_error)
            if not result.passed:
                passed = False
                logger.error(f"[{name}] seed={seed} 未通过: 最大相对误差 {result.max_rel_error:.3e} 于 {result.worst}")
    width = max(len(name) for name in worst)
    for name, error in worst.items():
        print(f"{name.ljust(width)}  {error:.3e}")
    return 0 if passed else 2


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    'train': cmd_train,
    'infer': cmd_infer,
    'eval': cmd_eval,
    'gen-data': cmd_gen_data,
    'grad-check': cmd_grad_check,
}


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def dispatch(args: argparse.Namespace) -> int:
    return COMMANDS[args.command](args)
