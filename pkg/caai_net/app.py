# -*- coding: utf-8 -*-
"""
CAAI-Net 命令行主程序入口
退出码: 0 成功, 1 校验错误(用法、配置、数据集), 2 运行期失败
"""

import logging
import sys
from typing import List, Optional

from .exceptions import CaaiError
from .utils.logger import setup_logger
from .views.cli import dispatch, parse_args


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    try:
        args = parse_args(argv)
    except CaaiError as e:
        print(str(e), file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    logger = setup_logger("caai_net", logging.DEBUG if args.verbose else logging.INFO,
                          log_to_file=args.log_file)
    logger.debug(f"命令: {args.command}")

    try:
        return dispatch(args)
    except CaaiError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("用户中断")
        return 2
    except Exception as e:
        logger.error(f"程序运行错误: {e}", exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
