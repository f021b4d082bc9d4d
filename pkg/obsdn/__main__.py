"""``python -m obsdn <command> ...``"""
import os
import sys

from dotenv import load_dotenv


def main():
    dotenv_path = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), '.env.dev')
    if os.path.exists(dotenv_path):
        load_dotenv(dotenv_path=dotenv_path)
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'obsdn.settings')

    from cli.runner import run

    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
