class Command:
    """A sub-command registered with the driver by a module's setup(driver)."""

    name = None
    help = ''

    def __init__(self, driver):
        self.driver = driver

    def add_arguments(self, parser):
        pass

    def run(self, config):
        """Returns the process exit code."""
        raise NotImplementedError

    def emit(self, lines, out=None):
        text = '\n'.join(lines) + '\n'
        if out:
            with open(out, 'w') as handle:
                handle.write(text)
        else:
            print(text, end='')
